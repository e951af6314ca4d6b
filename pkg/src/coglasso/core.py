"""Domain types shared across the package.

Variables are always ordered with layer X first: indices ``0 .. p_x - 1``
belong to X and ``p_x .. p - 1`` to Z. This keeps the within/between block
structure computable from the index alone.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateInputError, ParameterError

logger = logging.getLogger(__name__)

#: Largest accepted collaboration value.
C_MAX = 1e6
#: Smallest accepted ``alpha = 1 / (1 + c)``.
ALPHA_MIN = 1e-7


@dataclass(frozen=True)
class LayerPartition:
    """Split of ``p`` variables into a leading X layer and a trailing Z layer."""

    p_x: int
    p_z: int

    def __post_init__(self):
        if int(self.p_x) != self.p_x or int(self.p_z) != self.p_z:
            raise ParameterError("layer sizes must be integers")
        if self.p_x < 1 or self.p_z < 1:
            raise ParameterError(
                f"both layers need at least one variable, got p_x={self.p_x}, p_z={self.p_z}")
        object.__setattr__(self, "p_x", int(self.p_x))
        object.__setattr__(self, "p_z", int(self.p_z))

    @property
    def p(self) -> int:
        return self.p_x + self.p_z

    def layer(self, i: int) -> int:
        """Return 0 for an X variable, 1 for a Z variable."""
        if not 0 <= i < self.p:
            raise IndexError(f"variable index {i} outside 0..{self.p - 1}")
        return 0 if i < self.p_x else 1

    def labels(self) -> np.ndarray:
        """Layer label (0 = X, 1 = Z) for every variable."""
        out = np.ones(self.p, dtype=np.int64)
        out[: self.p_x] = 0
        return out

    def same_layer(self) -> np.ndarray:
        """Boolean ``p x p`` matrix, True where both indices share a layer."""
        lab = self.labels()
        return lab[:, None] == lab[None, :]


@dataclass(frozen=True)
class EmpiricalCovariance:
    S: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ParameterError(f"covariance must be square, got shape {S.shape}")
        if not np.all(np.isfinite(S)):
            raise DegenerateInputError("covariance contains non-finite entries")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-12:
            raise DegenerateInputError("covariance is not symmetric within 1e-12")
        d = np.diag(S)
        if np.any(d <= 0):
            bad = int(np.flatnonzero(d <= 0)[0])
            raise DegenerateInputError(f"covariance diagonal entry {bad} is not positive")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @property
    def p(self) -> int:
        return self.S.shape[0]

    def offdiag_abs_mean(self) -> float:
        """Mean absolute off-diagonal entry; scales the solver tolerances."""
        p = self.p
        if p < 2:
            return 0.0
        a = np.abs(self.S)
        return float((a.sum() - np.trace(a)) / (p * (p - 1)))


@dataclass(frozen=True)
class PenaltyMatrix:
    """Block penalty: ``lambda_w`` within a layer, ``lambda_b`` between layers."""

    lambda_w: float
    lambda_b: float
    partition: LayerPartition

    def __post_init__(self):
        _check_penalty("lambda_w", self.lambda_w)
        _check_penalty("lambda_b", self.lambda_b)

    def __call__(self, i: int, j: int) -> float:
        same = self.partition.layer(i) == self.partition.layer(j)
        return float(self.lambda_w if same else self.lambda_b)

    def dense(self) -> np.ndarray:
        return np.where(self.partition.same_layer(), float(self.lambda_w), float(self.lambda_b))


def make_penalty_matrix(lambda_w, lambda_b, partition: LayerPartition) -> PenaltyMatrix:
    return PenaltyMatrix(float(lambda_w), float(lambda_b), partition)


@dataclass(frozen=True)
class Hyperparameters:
    lambda_w: float
    lambda_b: float
    c: float = 0.0

    def __post_init__(self):
        _check_penalty("lambda_w", self.lambda_w)
        _check_penalty("lambda_b", self.lambda_b)
        if not np.isfinite(self.c) or self.c < 0:
            raise ParameterError(f"collaboration value must be a nonnegative number, got {self.c}")
        if self.c > C_MAX:
            raise ParameterError(f"collaboration value {self.c} exceeds the cap {C_MAX:g}")
        if self.alpha < ALPHA_MIN:
            raise ParameterError(f"alpha = 1/(1+c) underflows below {ALPHA_MIN:g}")
        for name in ("lambda_w", "lambda_b", "c"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def alpha(self) -> float:
        return 1.0 / (1.0 + self.c)

    def as_dict(self) -> dict:
        return {"lambda_w": self.lambda_w, "lambda_b": self.lambda_b, "c": self.c}


@dataclass
class CoglassoFit:
    """Result of a (co)glasso fit.

    ``B_hat[:, i]`` holds the row-regression coefficients of variable ``i``
    with a structural zero at position ``i``.
    """

    W: np.ndarray
    B_hat: np.ndarray
    Theta_hat: np.ndarray
    adjacency: np.ndarray
    hyper: Hyperparameters
    iterations: int
    converged: bool
    partition: Optional[LayerPartition] = None
    method: str = "coglasso"
    inverse_residual: float = float("nan")
    inner_nonconverged: int = 0
    #: column ``i`` is ``W_sub @ beta_i`` as written by row ``i`` in the last sweep
    W_rows: Optional[np.ndarray] = None

    @property
    def p(self) -> int:
        return self.W.shape[0]

    def edge_count(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())


@dataclass
class GroundTruthModel:
    theta: np.ndarray
    sigma: np.ndarray
    adjacency: np.ndarray
    partition: LayerPartition
    epsilon: float
    scenario_id: Optional[int] = None
    epsilon_doublings: int = 0
    activation: float = float("nan")
    extra: dict = field(default_factory=dict)

    def correlation_theta(self) -> np.ndarray:
        """Precision matrix of the unit-variance rescaled variables.

        Same support as ``theta``; this is the target a fit on standardized
        data estimates.
        """
        d = np.sqrt(np.diag(self.sigma))
        return self.theta * d[:, None] * d[None, :]


def _check_penalty(name, value):
    if value is None or not np.isfinite(value) or value < 0:
        raise ParameterError(f"{name} must be a nonnegative number, got {value}")


def empirical_covariance(data, standardize: bool = True) -> EmpiricalCovariance:
    """Maximum-likelihood covariance (``1/n`` normalization) of column-centered data.

    With ``standardize`` the result is the correlation matrix, with an exact
    unit diagonal.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ParameterError(f"data must be a 2-d array, got {X.ndim} dimensions")
    n, p = X.shape
    if n < 2:
        raise DegenerateInputError(f"need at least 2 observations, got {n}")
    if not np.all(np.isfinite(X)):
        raise DegenerateInputError("data contains missing or non-finite values")
    Xc = X - X.mean(axis=0)
    S = Xc.T @ Xc / n
    S = (S + S.T) / 2
    if standardize:
        d = np.diag(S).copy()
        bad = np.flatnonzero(d <= 0)
        if bad.size:
            raise DegenerateInputError(
                f"column {int(bad[0])} has zero variance and cannot be standardized")
        s = 1.0 / np.sqrt(d)
        S = S * s[:, None] * s[None, :]
        S = (S + S.T) / 2
        np.fill_diagonal(S, 1.0)
        np.clip(S, -1.0, 1.0, out=S)
    return EmpiricalCovariance(S, standardized=standardize)


def default_lambda_grid(S, count: int = 10, ratio: float = 0.1) -> np.ndarray:
    """Log-spaced descending penalty grid from ``max |S_ij|`` (i != j) down to ``ratio`` times it."""
    if count < 2:
        raise ParameterError(f"grid count must be at least 2, got {count}")
    if not 0 < ratio < 1:
        raise ParameterError(f"grid ratio must lie in (0, 1), got {ratio}")
    S = S.S if isinstance(S, EmpiricalCovariance) else np.asarray(S, dtype=float)
    off = np.abs(S - np.diag(np.diag(S)))
    lam_max = float(off.max()) if off.size else 0.0
    if lam_max <= 0:
        msg = "all off-diagonal covariances are zero; falling back to lambda_max = 1.0"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        logger.warning(msg)
        lam_max = 1.0
    grid = np.geomspace(lam_max, ratio * lam_max, count)
    grid[0] = lam_max
    return grid
