"""Coordinate-descent estimation for glasso and collaborative glasso.

Each outer sweep visits every variable ``i`` and solves a lasso-type
regression of column ``i`` of ``S`` on the working covariance with row and
column ``i`` removed, then writes ``W_sub @ beta`` back into ``W``. The
collaborative variant reweights the contribution of the other layer by
``alpha * (1 - c)`` and scales data and penalty by ``alpha = 1 / (1 + c)``.

The per-coordinate functions (``glasso_coordinate_update``,
``coglasso_coordinate_update``) are plain numpy and exist for inspection and
testing; the fits run through the jitted kernels below.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .core import (CoglassoFit, EmpiricalCovariance, Hyperparameters,
                   LayerPartition, PenaltyMatrix, make_penalty_matrix)
from .exceptions import DivergenceError, NumericalError, ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvergenceConfig:
    """Stopping rules.

    Both tolerances bound the largest absolute change in one sweep (of the
    ``beta`` coordinates for the inner loop, of the off-diagonal entries of
    ``W`` for the outer loop) and are relative to mean ``|S_ij|``, i != j.
    """

    outer_tol: float = 1e-4
    inner_tol: float = 1e-4
    max_outer: int = 100
    max_inner: int = 1000

    def __post_init__(self):
        if not (self.outer_tol > 0 and self.inner_tol > 0):
            raise ParameterError("convergence tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ParameterError("iteration caps must be at least 1")


#: Tolerances tight enough for the KKT residual bounds to hold at 1e-6.
TIGHT = ConvergenceConfig(outer_tol=1e-12, inner_tol=1e-12, max_outer=2000, max_inner=20000)


@dataclass
class RowProblem:
    """The regression solved for variable ``i``.

    ``layer_mask[k]`` is True when the k-th remaining variable belongs to
    layer X, so ``layer_mask[k] == layer_mask[j]`` tells whether ``k`` lies
    in the same layer as coordinate ``j``.
    """

    i: int
    s_i: np.ndarray
    W_sub: np.ndarray
    lambda_i: np.ndarray
    layer_mask: np.ndarray

    def __post_init__(self):
        m = len(self.s_i)
        if self.W_sub.shape != (m, m) or len(self.lambda_i) != m or len(self.layer_mask) != m:
            raise ParameterError("row problem components have inconsistent lengths")

    @classmethod
    def from_matrices(cls, W, S, i: int, penalty: PenaltyMatrix) -> "RowProblem":
        S = S.S if isinstance(S, EmpiricalCovariance) else np.asarray(S, dtype=float)
        W = np.asarray(W, dtype=float)
        p = W.shape[0]
        rest = np.delete(np.arange(p), i)
        lab = penalty.partition.labels()
        return cls(
            i=i,
            s_i=S[rest, i].copy(),
            W_sub=W[np.ix_(rest, rest)].copy(),
            lambda_i=penalty.dense()[rest, i].copy(),
            layer_mask=(lab[rest] == 0),
        )


@njit(cache=True, nogil=True)
def _soft_threshold(r, t):
    if r > t:
        return r - t
    if r < -t:
        return r + t
    return 0.0


def soft_threshold(r: float, t: float) -> float:
    if t < 0:
        raise ParameterError(f"threshold must be nonnegative, got {t}")
    return float(_soft_threshold(float(r), float(t)))


def _diag_entry(problem: RowProblem, j: int) -> float:
    wjj = problem.W_sub[j, j]
    if not wjj > 0:
        raise NumericalError(f"non-positive diagonal W_jj = {wjj} at coordinate {j}")
    return wjj


def glasso_coordinate_update(problem: RowProblem, beta, j: int, lam: float) -> float:
    """One plain glasso coordinate step for ``beta[j]``."""
    wjj = _diag_entry(problem, j)
    w = problem.W_sub[j]
    r = problem.s_i[j] - (w @ beta - w[j] * beta[j])
    return soft_threshold(r, lam) / wjj


def coglasso_coordinate_update(problem: RowProblem, beta, j: int, hyper: Hyperparameters) -> float:
    """One collaborative coordinate step for ``beta[j]``.

    Same-layer neighbours enter with weight 1, other-layer neighbours with
    weight ``alpha * (1 - c)``; the threshold is ``alpha * Lambda_ji``.
    """
    wjj = _diag_entry(problem, j)
    alpha = hyper.alpha
    beta = np.asarray(beta, dtype=float)
    same = problem.layer_mask == problem.layer_mask[j]
    contrib = problem.W_sub[j] * beta
    contrib[j] = 0.0
    r = alpha * problem.s_i[j] - contrib[same].sum() - alpha * (1 - hyper.c) * contrib[~same].sum()
    return soft_threshold(r, alpha * problem.lambda_i[j]) / wjj


def row_objective(problem: RowProblem, beta, c: float) -> float:
    """Row objective of collaborative glasso at ``beta``.

    Expanded form ``1/2 s' W^-1 s + (1+c)/2 b'Wb - c b'W_cross b - b's
    + sum |Lambda_i * b|`` where ``W_cross`` keeps only the between-layer
    entries of ``W_sub``.
    """
    beta = np.asarray(beta, dtype=float)
    W = problem.W_sub
    s = problem.s_i
    cross = problem.layer_mask[:, None] != problem.layer_mask[None, :]
    const = 0.5 * s @ np.linalg.solve(W, s)
    quad = 0.5 * (1 + c) * beta @ W @ beta - c * beta @ np.where(cross, W, 0.0) @ beta
    return float(const + quad - beta @ s + np.sum(problem.lambda_i * np.abs(beta)))


# --- jitted kernels -------------------------------------------------------

@njit(cache=True, nogil=True)
def _row_cd_glasso(Wsub, s, lam, beta, thr, max_inner):
    m = s.shape[0]
    for sweep in range(max_inner):
        dmax = 0.0
        for j in range(m):
            acc = 0.0
            for k in range(m):
                if k != j and beta[k] != 0.0:
                    acc += Wsub[j, k] * beta[k]
            r = s[j] - acc
            if r > lam[j]:
                new = (r - lam[j]) / Wsub[j, j]
            elif r < -lam[j]:
                new = (r + lam[j]) / Wsub[j, j]
            else:
                new = 0.0
            d = abs(new - beta[j])
            if d > dmax:
                dmax = d
            beta[j] = new
        if dmax <= thr:
            return sweep + 1, True
    return max_inner, False


@njit(cache=True, nogil=True)
def _row_cd_coglasso(Wsub, s, lam, in_x, alpha, cross_w, beta, thr, max_inner):
    m = s.shape[0]
    for sweep in range(max_inner):
        dmax = 0.0
        for j in range(m):
            acc = 0.0
            for k in range(m):
                if k != j and beta[k] != 0.0:
                    t = Wsub[j, k] * beta[k]
                    if in_x[k] != in_x[j]:
                        t *= cross_w
                    acc += t
            r = alpha * s[j] - acc
            pen = alpha * lam[j]
            if r > pen:
                new = (r - pen) / Wsub[j, j]
            elif r < -pen:
                new = (r + pen) / Wsub[j, j]
            else:
                new = 0.0
            d = abs(new - beta[j])
            if d > dmax:
                dmax = d
            beta[j] = new
        if dmax <= thr:
            return sweep + 1, True
    return max_inner, False


@njit(cache=True, nogil=True)
def _fit_kernel(S, W, B, V, Lam, in_x, alpha, cross_w, collab, inner_thr, outer_thr,
                max_inner, max_outer):
    """Run outer sweeps in place on ``W``, ``B`` and ``V``.

    ``V[:, i]`` receives the column ``W_sub @ beta_i`` written by row ``i``.

    Returns ``(sweeps, status, inner_failures)``; status 0 = converged,
    1 = sweep cap reached, 2 = non-finite values.
    """
    p = S.shape[0]
    m = p - 1
    rest = np.empty(m, dtype=np.int64)
    Wsub = np.empty((m, m))
    s = np.empty(m)
    lam = np.empty(m)
    sub_x = np.empty(m, dtype=np.bool_)
    beta = np.empty(m)
    W0 = np.empty((p, p))
    inner_fail = 0
    for sweep in range(max_outer):
        W0[:, :] = W
        for i in range(p):
            a = 0
            for k in range(p):
                if k != i:
                    rest[a] = k
                    a += 1
            for a in range(m):
                ka = rest[a]
                s[a] = S[ka, i]
                lam[a] = Lam[ka, i]
                sub_x[a] = in_x[ka]
                beta[a] = B[ka, i]
                for b in range(m):
                    Wsub[a, b] = W[ka, rest[b]]
            if collab:
                _, ok = _row_cd_coglasso(Wsub, s, lam, sub_x, alpha, cross_w, beta,
                                         inner_thr, max_inner)
            else:
                _, ok = _row_cd_glasso(Wsub, s, lam, beta, inner_thr, max_inner)
            if not ok:
                inner_fail += 1
            for a in range(m):
                v = 0.0
                for b in range(m):
                    v += Wsub[a, b] * beta[b]
                if not np.isfinite(v) or not np.isfinite(beta[a]):
                    return sweep + 1, 2, inner_fail
                ka = rest[a]
                V[ka, i] = v
                W[ka, i] = v
                W[i, ka] = v
                B[ka, i] = beta[a]
        # Entries can be rewritten twice within a sweep; only the net change counts.
        change = 0.0
        for a in range(p):
            for b in range(p):
                if a != b:
                    d = abs(W[a, b] - W0[a, b])
                    if d > change:
                        change = d
        if change <= outer_thr:
            return sweep + 1, 0, inner_fail
    return max_outer, 1, inner_fail


# --- public solver API ----------------------------------------------------

def solve_row(problem: RowProblem, hyper: Hyperparameters, cfg: Optional[ConvergenceConfig] = None,
              warm_start=None, scale: float = 1.0):
    """Cycle collaborative coordinate updates until the largest change in a sweep
    is at most ``cfg.inner_tol * scale``.

    ``scale`` is normally the mean absolute off-diagonal entry of ``S``.
    Returns ``(beta, converged)``; on hitting ``max_inner`` the last iterate is
    returned with ``converged=False``.
    """
    cfg = cfg or ConvergenceConfig()
    m = len(problem.s_i)
    beta = np.zeros(m) if warm_start is None else np.array(warm_start, dtype=float)
    if beta.shape != (m,) or not np.all(np.isfinite(beta)):
        raise ParameterError("warm start must be a finite vector of length p - 1")
    if np.any(np.diag(problem.W_sub) <= 0):
        raise NumericalError("W_sub has a non-positive diagonal entry")
    _, ok = _row_cd_coglasso(
        np.ascontiguousarray(problem.W_sub, dtype=float), np.asarray(problem.s_i, dtype=float),
        np.asarray(problem.lambda_i, dtype=float), np.asarray(problem.layer_mask, dtype=np.bool_),
        hyper.alpha, hyper.alpha * (1.0 - hyper.c), beta, cfg.inner_tol * scale, cfg.max_inner)
    if not ok:
        logger.debug("row %d hit max_inner=%d", problem.i, cfg.max_inner)
    return beta, bool(ok)


def _as_cov(S) -> EmpiricalCovariance:
    return S if isinstance(S, EmpiricalCovariance) else EmpiricalCovariance(np.asarray(S, dtype=float))


def _start(S, diag_pen, warm_start):
    p = S.p
    if warm_start is not None:
        if warm_start.W.shape != (p, p):
            raise ParameterError("warm start has the wrong dimension")
        W = np.array(warm_start.W, dtype=float)
        B = np.array(warm_start.B_hat, dtype=float)
    else:
        W = np.array(S.S, dtype=float)
        B = np.zeros((p, p))
    np.fill_diagonal(W, np.diag(S.S) + diag_pen)
    np.fill_diagonal(B, 0.0)
    return W, B


def _run(S, W, B, V, Lam, in_x, alpha, cross_w, collab, cfg, hyper):
    scale = S.offdiag_abs_mean()
    sweeps, status, inner_fail = _fit_kernel(
        S.S, W, B, V, Lam, in_x, alpha, cross_w, collab,
        cfg.inner_tol * scale, cfg.outer_tol * scale, cfg.max_inner, cfg.max_outer)
    if status == 2:
        raise DivergenceError(
            f"non-finite values in W during sweep {sweeps} "
            f"(lambda_w={hyper.lambda_w}, lambda_b={hyper.lambda_b}, c={hyper.c})")
    if status == 1:
        logger.info("fit stopped at max_outer=%d without converging (%s)", sweeps, hyper)
    return sweeps, status == 0, inner_fail


def _finish(W, B, V, hyper, sweeps, converged, inner_fail, partition, method):
    theta = recover_precision(W, B)
    np.fill_diagonal(V, np.diag(W))
    return CoglassoFit(
        W=W, B_hat=B, Theta_hat=theta, adjacency=extract_adjacency(B, 0.0), hyper=hyper,
        iterations=int(sweeps), converged=bool(converged), partition=partition, method=method,
        inverse_residual=float(np.max(np.abs(W @ theta - np.eye(W.shape[0])))),
        inner_nonconverged=int(inner_fail), W_rows=V)


def fit(S, hyper: Hyperparameters, partition: LayerPartition,
        cfg: Optional[ConvergenceConfig] = None, warm_start: Optional[CoglassoFit] = None) -> CoglassoFit:
    """Collaborative graphical lasso.

    Parameters
    ----------
    S : EmpiricalCovariance or array, shape (p, p)
        Variables ordered X layer first.
    hyper : Hyperparameters
        Within/between penalties and collaboration value.
    partition : LayerPartition
        Must satisfy ``partition.p == S.p``.
    cfg : ConvergenceConfig, optional
    warm_start : CoglassoFit, optional
        Earlier fit whose ``W`` off-diagonals and ``B_hat`` seed the sweeps.

    Returns
    -------
    CoglassoFit
    """
    S = _as_cov(S)
    cfg = cfg or ConvergenceConfig()
    if partition.p != S.p:
        raise ParameterError(f"partition has p={partition.p} but S is {S.p}x{S.p}")
    Lam = make_penalty_matrix(hyper.lambda_w, hyper.lambda_b, partition).dense()
    W, B = _start(S, hyper.lambda_w, warm_start)
    in_x = partition.labels() == 0
    V = np.zeros_like(W)
    sweeps, ok, inner_fail = _run(S, W, B, V, Lam, in_x, hyper.alpha, hyper.alpha * (1.0 - hyper.c),
                                  True, cfg, hyper)
    return _finish(W, B, V, hyper, sweeps, ok, inner_fail, partition, "coglasso")


def fit_glasso(S, lam: float, cfg: Optional[ConvergenceConfig] = None,
               warm_start: Optional[CoglassoFit] = None) -> CoglassoFit:
    """Plain graphical lasso with scalar penalty ``lam``."""
    S = _as_cov(S)
    cfg = cfg or ConvergenceConfig()
    if S.p < 2:
        raise ParameterError("need at least two variables")
    hyper = Hyperparameters(lam, lam, 0.0)
    Lam = np.full((S.p, S.p), hyper.lambda_w)
    W, B = _start(S, hyper.lambda_w, warm_start)
    in_x = np.ones(S.p, dtype=np.bool_)
    V = np.zeros_like(W)
    sweeps, ok, inner_fail = _run(S, W, B, V, Lam, in_x, 1.0, 1.0, False, cfg, hyper)
    return _finish(W, B, V, hyper, sweeps, ok, inner_fail, None, "glasso")


def recover_precision(W, B_hat) -> np.ndarray:
    """Precision matrix from the row regressions.

    ``theta_ii = 1 / (W_ii - W_i' beta_i)`` and the off-diagonal column is
    ``-beta_i * theta_ii``; the two triangles are then averaged.
    """
    W = np.asarray(W, dtype=float)
    B = np.asarray(B_hat, dtype=float)
    p = W.shape[0]
    theta = np.zeros((p, p))
    for i in range(p):
        beta = B[:, i].copy()
        beta[i] = 0.0
        denom = W[i, i] - W[i] @ beta
        if not denom > 0:
            raise NumericalError(f"non-positive Schur complement {denom:.3g} for variable {i}")
        tii = 1.0 / denom
        theta[:, i] = -beta * tii
        theta[i, i] = tii
    return (theta + theta.T) / 2


def extract_adjacency(B_hat, eps: float = 0.0) -> np.ndarray:
    """Symmetric 0/1 adjacency: an edge when either direction exceeds ``eps``."""
    if eps < 0:
        raise ParameterError("eps must be nonnegative")
    mag = np.abs(np.asarray(B_hat, dtype=float)) > eps
    A = (mag | mag.T).astype(np.int8)
    np.fill_diagonal(A, 0)
    return A


def row_working_covariance(fit_result: CoglassoFit, i: int) -> np.ndarray:
    """``W`` with row/column ``i`` removed, as seen by row ``i`` in the last sweep.

    Within a sweep, entry ``(a, b)`` is written by row ``a`` and again by
    row ``b``. Row ``i`` therefore sees the value written by ``min(a, b)``
    when ``min(a, b) < i < max(a, b)`` and the value written by
    ``max(a, b)`` otherwise (at a fixed point of the sweep map, the previous
    sweep's write equals the current one). With plain glasso both writes
    agree at convergence; with ``c > 0`` they generally do not.
    """
    V = fit_result.W_rows
    if V is None:
        Wfull = fit_result.W
    else:
        p = V.shape[0]
        idx = np.arange(p)
        lo = np.minimum.outer(idx, idx)
        hi = np.maximum.outer(idx, idx)
        straddle = (lo < i) & (i < hi)
        # V[a, b] is the write of row b; the write of row a is V[b, a].
        by_hi = np.where(idx[None, :] == hi, V, V.T)
        by_lo = np.where(idx[None, :] == lo, V, V.T)
        Wfull = np.where(straddle, by_lo, by_hi)
        np.fill_diagonal(Wfull, np.diag(fit_result.W))
    rest = np.delete(np.arange(Wfull.shape[0]), i)
    return Wfull[np.ix_(rest, rest)]


def kkt_residuals(fit_result: CoglassoFit, S) -> tuple[float, float]:
    """Worst KKT violations of the row problems, each at its own working ``W_sub``.

    Returns ``(active, inactive)``: the largest stationarity residual over
    nonzero coefficients and the largest excess ``|r| - alpha*Lambda_ji``
    over zero coefficients (0 when none exceeds the interval).
    """
    S = _as_cov(S)
    W, B, hyper = fit_result.W, fit_result.B_hat, fit_result.hyper
    p = W.shape[0]
    if fit_result.partition is None:
        in_x = np.ones(p, dtype=bool)
        alpha, cross_w = 1.0, 1.0
        Lam = np.full((p, p), hyper.lambda_w)
    else:
        in_x = fit_result.partition.labels() == 0
        alpha, cross_w = hyper.alpha, hyper.alpha * (1.0 - hyper.c)
        Lam = make_penalty_matrix(hyper.lambda_w, hyper.lambda_b, fit_result.partition).dense()
    worst_active = 0.0
    worst_inactive = 0.0
    for i in range(p):
        rest = np.delete(np.arange(p), i)
        Wsub = row_working_covariance(fit_result, i)
        beta = B[rest, i]
        sub_x = in_x[rest]
        weight = np.where(sub_x[:, None] == sub_x[None, :], 1.0, cross_w)
        Wt = Wsub * weight
        np.fill_diagonal(Wt, 0.0)
        r = alpha * S.S[rest, i] - Wt @ beta
        pen = alpha * Lam[rest, i]
        on = beta != 0
        if on.any():
            res = r[on] - np.diag(Wsub)[on] * beta[on] - np.sign(beta[on]) * pen[on]
            worst_active = max(worst_active, float(np.max(np.abs(res))))
        if (~on).any():
            worst_inactive = max(worst_inactive, float(np.max(np.abs(r[~on]) - pen[~on], initial=0.0)))
    return worst_active, worst_inactive
