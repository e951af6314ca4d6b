"""Structure-recovery scores (F1, MCC) and the symmetrized Gaussian KL divergence."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import NumericalError, ParameterError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _check_adjacency(A, name):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise ParameterError(f"{name} is not symmetric")
    if np.any(np.diag(A) != 0):
        raise ParameterError(f"{name} has a nonzero diagonal")
    return A != 0


def confusion(truth, estimate) -> Confusion:
    """Count agreements over the unordered pairs ``i < j``."""
    T = _check_adjacency(truth, "truth")
    E = _check_adjacency(estimate, "estimate")
    if T.shape != E.shape:
        raise ParameterError(f"shape mismatch: {T.shape} vs {E.shape}")
    iu = np.triu_indices(T.shape[0], 1)
    t, e = T[iu], E[iu]
    return Confusion(
        tp=int(np.sum(t & e)), fp=int(np.sum(~t & e)),
        tn=int(np.sum(~t & ~e)), fn=int(np.sum(t & ~e)))


def f1(c: Confusion) -> float:
    # 0 when there are no true positives
    if c.tp == 0:
        return 0.0
    precision = c.tp / (c.tp + c.fp)
    recall = c.tp / (c.tp + c.fn)
    return 2 * precision * recall / (precision + recall)


def mcc(c: Confusion) -> float:
    """Matthews correlation; 0 whenever a denominator factor vanishes."""
    factors = (c.tp + c.fp, c.tp + c.fn, c.tn + c.fp, c.tn + c.fn)
    if any(f == 0 for f in factors):
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    return num / math.sqrt(math.prod(float(f) for f in factors))


def _cholesky(M, name):
    try:
        return scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        lo = float(np.linalg.eigvalsh((M + M.T) / 2)[0])
        raise NumericalError(f"{name} is not positive definite (smallest eigenvalue {lo:.3g})")


def kld(theta_true, theta_hat) -> float:
    """``0.5 * (tr(T inv(H)) + tr(H inv(T)) - p)``.

    Symmetric in its arguments. With ``-p`` (rather than ``-2p``) inside the
    bracket the minimum, reached at ``H = T``, is ``p / 2``; the offset is the
    same for every estimate and leaves comparisons unchanged.
    """
    T = np.asarray(theta_true, dtype=float)
    H = np.asarray(theta_hat, dtype=float)
    if T.shape != H.shape or T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ParameterError(f"expected two square matrices of equal shape, got {T.shape} and {H.shape}")
    for M, name in ((T, "theta_true"), (H, "theta_hat")):
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(M))):
            raise ParameterError(f"{name} is not symmetric")
    cT = _cholesky(T, "theta_true")
    cH = _cholesky(H, "theta_hat")
    t1 = float(np.trace(scipy.linalg.cho_solve(cH, T)))
    t2 = float(np.trace(scipy.linalg.cho_solve(cT, H)))
    return 0.5 * ((t1 + t2) - T.shape[0])


def score(truth_adjacency, truth_theta, fit_result) -> dict:
    """F1, MCC and KLD of a fit against ground truth (KLD is NaN when undefined)."""
    c = confusion(truth_adjacency, fit_result.adjacency)
    try:
        k = kld(truth_theta, fit_result.Theta_hat)
    except NumericalError:
        k = float("nan")
    return {"f1": f1(c), "mcc": mcc(c), "kld": k}
