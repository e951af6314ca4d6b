"""Synthetic two-layer Gaussian graphical models and replicate datasets.

A ground truth is built from two cluster graphs (one per layer), their
precision blocks, and a sparse cross-layer block obtained by L1-penalized
regression of independently sampled Z data on X data, tuned so that a target
fraction of the cross-block coefficients is nonzero.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .core import GroundTruthModel, LayerPartition
from .exceptions import GenerationError, NumericalError, ParameterError
from .solver import _soft_threshold

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: int
    p_x: int
    clusters_x: int
    within_prob_x: float
    extra_edges_x: int
    epsilon: float
    p_z: int = 20
    clusters_z: int = 2
    within_prob_z: float = 0.35
    extra_edges_z: int = 4
    target_activation: float = 0.40
    n_regression: int = 100
    n_replicate: int = 50
    edge_value: float = 0.3

    def __post_init__(self):
        for name in ("within_prob_x", "within_prob_z"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ParameterError(f"{name} must lie in (0, 1], got {v}")
        for name in ("p_x", "p_z", "clusters_x", "clusters_z", "n_regression", "n_replicate"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.extra_edges_x < 0 or self.extra_edges_z < 0:
            raise ParameterError("extra edge counts must be nonnegative")
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if not 0 <= self.target_activation <= 1:
            raise ParameterError("target_activation must lie in [0, 1]")

    @property
    def partition(self) -> LayerPartition:
        return LayerPartition(self.p_x, self.p_z)

    def as_dict(self) -> dict:
        return asdict(self)


_PRESETS = {
    1: dict(p_x=40, clusters_x=3, within_prob_x=1 / 4, extra_edges_x=7, epsilon=0.3),
    2: dict(p_x=80, clusters_x=3, within_prob_x=1 / 6, extra_edges_x=13, epsilon=0.3),
    3: dict(p_x=130, clusters_x=3, within_prob_x=1 / 12, extra_edges_x=17, epsilon=0.4),
}


def scenario_preset(scenario_id: int) -> ScenarioSpec:
    """The three benchmark scenarios (60, 100 and 150 variables)."""
    if scenario_id not in _PRESETS:
        raise ParameterError(f"unknown scenario {scenario_id!r}; expected 1, 2 or 3")
    return ScenarioSpec(scenario_id=scenario_id, **_PRESETS[scenario_id])


@dataclass
class ClusterGraph:
    adjacency: np.ndarray
    cluster_assignment: np.ndarray
    extra_edge_list: list = field(default_factory=list)

    def edge_count(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    def between_cluster_edges(self) -> int:
        cl = self.cluster_assignment
        iu = np.triu_indices(len(cl), 1)
        return int(np.sum(self.adjacency[iu].astype(bool) & (cl[iu[0]] != cl[iu[1]])))


def cluster_graph(p: int, k_clusters: int, within_prob: float, extra_edges: int, rng) -> ClusterGraph:
    """Random cluster network.

    Nodes are split into ``k_clusters`` contiguous groups whose sizes differ
    by at most one. Within a group every pair is joined with probability
    ``within_prob``; then exactly ``extra_edges`` edges are drawn uniformly
    among pairs from different groups.
    """
    if not 1 <= k_clusters <= p:
        raise ParameterError(f"need 1 <= k_clusters <= p, got k={k_clusters}, p={p}")
    if not 0 <= within_prob <= 1:
        raise ParameterError(f"within_prob must lie in [0, 1], got {within_prob}")
    assign = np.concatenate([np.full(len(chunk), g) for g, chunk in
                             enumerate(np.array_split(np.arange(p), k_clusters))]).astype(np.int64)
    iu, ju = np.triu_indices(p, 1)
    same = assign[iu] == assign[ju]
    A = np.zeros((p, p), dtype=np.int8)
    draws = rng.random(int(same.sum()))
    keep = draws < within_prob
    A[iu[same][keep], ju[same][keep]] = 1
    cand_i, cand_j = iu[~same], ju[~same]
    if extra_edges > len(cand_i):
        raise ParameterError(
            f"cannot place {extra_edges} between-cluster edges; only {len(cand_i)} pairs exist")
    picks = np.sort(rng.choice(len(cand_i), size=extra_edges, replace=False)) if extra_edges else []
    extra = [(int(cand_i[t]), int(cand_j[t])) for t in picks]
    for a, b in extra:
        A[a, b] = 1
    A = A + A.T
    return ClusterGraph(adjacency=A, cluster_assignment=assign, extra_edge_list=extra)


def block_precision(graph: ClusterGraph, edge_value: float = 0.3, rng=None, signed: bool = False) -> np.ndarray:
    """Precision block with support equal to the graph.

    Off-diagonal entries are ``edge_value`` on edges (random signs when
    ``signed``); the common diagonal is ``|smallest eigenvalue of the
    off-diagonal part| + 0.1 + edge_value``, which keeps the smallest
    eigenvalue at ``0.1 + edge_value``.
    """
    if edge_value == 0:
        raise ParameterError("edge_value must be nonzero")
    A = np.asarray(graph.adjacency, dtype=float)
    off = edge_value * A
    if signed:
        if rng is None:
            raise ParameterError("signed precision blocks need an rng")
        sign = np.where(rng.random(A.shape) < 0.5, -1.0, 1.0)
        sign = np.triu(sign, 1)
        off = off * (sign + sign.T)
    lo = float(np.linalg.eigvalsh(off)[0]) if off.size else 0.0
    theta = off + (abs(lo) + 0.1 + abs(edge_value)) * np.eye(A.shape[0])
    assert np.linalg.eigvalsh(theta)[0] > 0
    return theta


@dataclass
class RegressionBlock:
    B: np.ndarray
    activation: float
    penalty_used: float
    warnings: list = field(default_factory=list)


@njit(cache=True, nogil=True)
def _lasso_cd(G, q, lam, b, tol, max_iter):
    m = q.shape[0]
    for _ in range(max_iter):
        dmax = 0.0
        for j in range(m):
            r = q[j]
            for k in range(m):
                if k != j and b[k] != 0.0:
                    r -= G[j, k] * b[k]
            new = _soft_threshold(r, lam) / G[j, j]
            d = abs(new - b[j])
            if d > dmax:
                dmax = d
            b[j] = new
        if dmax <= tol:
            return True
    return False


class _LassoState:
    """Centered Gram matrix and warm-started coefficients for one response."""

    def __init__(self, X, y):
        n = X.shape[0]
        Xc = X - X.mean(axis=0)
        yc = y - y.mean()
        self.G = Xc.T @ Xc / n
        self.q = Xc.T @ yc / n
        self.b = np.zeros(X.shape[1])
        self.tol = 1e-9 * max(float(np.max(np.abs(self.q), initial=0.0)), 1e-300)

    def step(self, lam: float, max_iter: int = 10000) -> np.ndarray:
        _lasso_cd(self.G, self.q, float(lam), self.b, self.tol, max_iter)
        return self.b.copy()


def lasso_path(X, y, penalties, max_iter: int = 10000) -> np.ndarray:
    """Coefficients of ``min 1/(2n)|y - Xb|^2 + lam |b|_1`` along ``penalties``.

    Columns are centered; no intercept is returned. Warm-started in the order given.
    """
    state = _LassoState(np.asarray(X, dtype=float), np.asarray(y, dtype=float))
    return np.array([state.step(lam, max_iter) for lam in penalties])


def default_regression_grid(X_data, Z_data, count: int = 200, ratio: float = 1e-3) -> np.ndarray:
    Xc = X_data - X_data.mean(axis=0)
    Zc = Z_data - Z_data.mean(axis=0)
    lam_max = float(np.max(np.abs(Xc.T @ Zc))) / X_data.shape[0]
    return np.geomspace(lam_max, ratio * lam_max, count)


def sparse_multireg(X_data, Z_data, target_activation: float = 0.40, penalty_grid=None) -> RegressionBlock:
    """Sparse ``p_z x p_x`` coefficient matrix of ``Z = B X + E``.

    Each response column of ``Z_data`` is regressed on ``X_data`` with an L1
    penalty. Walking a strong-to-weak penalty grid, the ``B`` whose nonzero
    fraction is closest to ``target_activation`` is returned; ties go to the
    sparser fit. The walk stops once the activation has moved past the
    target by more than the best gap seen.
    """
    X_data = np.asarray(X_data, dtype=float)
    Z_data = np.asarray(Z_data, dtype=float)
    if X_data.shape[0] != Z_data.shape[0] or X_data.shape[0] < 2:
        raise ParameterError("X and Z need the same number (>= 2) of observations")
    grid = default_regression_grid(X_data, Z_data) if penalty_grid is None else np.asarray(penalty_grid, float)
    if grid.size == 0 or np.any(np.diff(grid) > 0):
        raise ParameterError("penalty grid must be non-empty and descending")
    p_x, p_z = X_data.shape[1], Z_data.shape[1]
    states = [_LassoState(X_data, Z_data[:, r]) for r in range(p_z)]
    best = None
    best_gap = np.inf
    any_active = False
    for lam in grid:
        B = np.array([st.step(lam) for st in states])
        act = np.count_nonzero(B) / B.size
        any_active |= act > 0
        gap = abs(act - target_activation)
        if gap < best_gap:
            best, best_gap, best_lam = B, gap, float(lam)
        elif act > target_activation:
            break
    notes = []
    if target_activation > 0 and not any_active:
        msg = "penalty grid never activated a coefficient; using the weakest penalty"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
        best, best_lam = B, float(grid[-1])
    return RegressionBlock(B=best, activation=float(np.count_nonzero(best) / best.size),
                           penalty_used=best_lam, warnings=notes)


def assemble_theta(theta_xx, theta_zz, block, epsilon: float, scenario_id=None,
                   max_doublings: int = 10) -> GroundTruthModel:
    """Stack the blocks, add ``epsilon`` to the diagonal and invert.

    ``epsilon`` doubles until the matrix is positive definite; more than
    ``max_doublings`` doublings is a generation error.
    """
    B = block.B if isinstance(block, RegressionBlock) else np.asarray(block, dtype=float)
    theta_xx = np.asarray(theta_xx, dtype=float)
    theta_zz = np.asarray(theta_zz, dtype=float)
    p_x, p_z = theta_xx.shape[0], theta_zz.shape[0]
    if B.shape != (p_z, p_x):
        raise ParameterError(f"cross block must be {p_z}x{p_x}, got {B.shape}")
    base = np.block([[theta_xx, B.T], [B, theta_zz]])
    base = (base + base.T) / 2
    eps = float(epsilon)
    doublings = 0
    while True:
        theta = base + eps * np.eye(p_x + p_z)
        if np.linalg.eigvalsh(theta)[0] > 0:
            break
        if doublings == max_doublings:
            raise GenerationError(
                f"precision matrix still not positive definite after {max_doublings} doublings of epsilon")
        eps *= 2
        doublings += 1
        logger.info("epsilon doubled to %g", eps)
    sigma = np.linalg.inv(theta)
    sigma = (sigma + sigma.T) / 2
    resid = float(np.max(np.abs(sigma @ theta - np.eye(p_x + p_z))))
    if resid > 1e-8:
        raise GenerationError(f"inversion residual {resid:.2e} exceeds 1e-8")
    adj = (theta != 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    act = float(np.count_nonzero(B) / B.size) if B.size else 0.0
    return GroundTruthModel(theta=theta, sigma=sigma, adjacency=adj,
                            partition=LayerPartition(p_x, p_z), epsilon=eps,
                            scenario_id=scenario_id, epsilon_doublings=doublings, activation=act)


def sample_mvn(sigma, n: int, rng) -> np.ndarray:
    """``n`` mean-zero normal draws via the lower Cholesky factor of ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        lo = float(np.linalg.eigvalsh((sigma + sigma.T) / 2)[0])
        raise NumericalError(f"covariance is not positive definite (smallest eigenvalue {lo:.3g})")
    z = rng.standard_normal((n, sigma.shape[0]))
    return z @ L.T


def truth_rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))


def replicate_rng(seed, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))


def generate_truth(spec: ScenarioSpec, seed) -> GroundTruthModel:
    rng = truth_rng(seed)
    gx = cluster_graph(spec.p_x, spec.clusters_x, spec.within_prob_x, spec.extra_edges_x, rng)
    gz = cluster_graph(spec.p_z, spec.clusters_z, spec.within_prob_z, spec.extra_edges_z, rng)
    txx = block_precision(gx, spec.edge_value)
    tzz = block_precision(gz, spec.edge_value)
    X = sample_mvn(np.linalg.inv(txx), spec.n_regression, rng)
    Z = sample_mvn(np.linalg.inv(tzz), spec.n_regression, rng)
    block = sparse_multireg(X, Z, spec.target_activation)
    truth = assemble_theta(txx, tzz, block, spec.epsilon, scenario_id=spec.scenario_id)
    truth.extra = {
        "extra_edges_x": gx.extra_edge_list, "extra_edges_z": gz.extra_edge_list,
        "between_cluster_edges_x": gx.between_cluster_edges(),
        "between_cluster_edges_z": gz.between_cluster_edges(),
        "clusters_x": gx.cluster_assignment.tolist(), "clusters_z": gz.cluster_assignment.tolist(),
        "regression_penalty": block.penalty_used,
    }
    return truth


def generate_replicates(spec: ScenarioSpec, num_replicates: int = 100, seed=0,
                        truth: Optional[GroundTruthModel] = None):
    """Ground truth plus ``num_replicates`` datasets of ``spec.n_replicate`` rows.

    Replicate ``r`` depends only on ``(seed, r)``, not on how many are drawn.
    """
    if num_replicates < 0:
        raise ParameterError("num_replicates must be nonnegative")
    truth = generate_truth(spec, seed) if truth is None else truth
    data = [sample_mvn(truth.sigma, spec.n_replicate, replicate_rng(seed, r))
            for r in range(num_replicates)]
    return truth, data
