"""Stability-based selection of penalties and collaboration value.

``stars_sweep`` is the one-dimensional StARS rule: fit every candidate on the
same set of subsamples, measure edge instability, monotonize it along the
sparse-to-dense path and keep the densest candidate whose monotonized
instability stays within the threshold. ``xstars`` alternates StARS sweeps
over ``lambda_w``, ``lambda_b`` and ``c``.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Hyperparameters, LayerPartition, empirical_covariance
from .exceptions import CoglassoError, ParameterError
from .solver import ConvergenceConfig, fit, fit_glasso

logger = logging.getLogger(__name__)

AXES = ("lambda_w", "lambda_b", "c", "lambda")
MAX_ITER = 10


def default_subsample_size(n: int) -> int:
    """``floor(10 sqrt(n))`` for ``n > 144``, otherwise ``floor(0.8 n)``; at most ``n - 1``."""
    b = math.floor(10 * math.sqrt(n)) if n > 144 else math.floor(0.8 * n)
    return max(2, min(b, n - 1))


@dataclass(frozen=True)
class StabilityConfig:
    num_subsamples: int = 20
    subsample_size: Optional[int] = None
    instability_threshold: float = 0.05
    seed: int = 0
    redraw_per_value: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.num_subsamples < 2:
            raise ParameterError("need at least 2 subsamples")
        if not 0 < self.instability_threshold < 0.5:
            raise ParameterError("instability threshold must lie in (0, 0.5)")
        if self.subsample_size is not None and self.subsample_size < 2:
            raise ParameterError("subsample size must be at least 2")
        if self.threads < 1:
            raise ParameterError("threads must be at least 1")

    def size_for(self, n: int) -> int:
        b = default_subsample_size(n) if self.subsample_size is None else self.subsample_size
        if not 2 <= b < n:
            raise ParameterError(f"subsample size {b} must satisfy 2 <= b < n = {n}")
        return b


@dataclass
class SweepTrace:
    axis: str
    values: np.ndarray
    instability: np.ndarray
    monotonized: np.ndarray
    chosen_index: int
    edge_counts: Optional[np.ndarray] = None

    @property
    def chosen(self) -> float:
        return float(self.values[self.chosen_index])

    def as_dict(self) -> dict:
        return {
            "axis": self.axis, "values": [float(v) for v in self.values],
            "instability": [float(v) for v in self.instability],
            "monotonized": [float(v) for v in self.monotonized],
            "chosen_index": int(self.chosen_index),
            "edge_counts": None if self.edge_counts is None else [float(v) for v in self.edge_counts],
        }


@dataclass
class SelectionResult:
    lambda_w_hat: float
    lambda_b_hat: float
    c_hat: float
    traces: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    #: final value of the consecutive-repeat counter (2 on convergence)
    repeats: int = 0

    @property
    def hyper(self) -> Hyperparameters:
        return Hyperparameters(self.lambda_w_hat, self.lambda_b_hat, self.c_hat)

    def as_dict(self) -> dict:
        return {
            "lambda_w_hat": self.lambda_w_hat, "lambda_b_hat": self.lambda_b_hat, "c_hat": self.c_hat,
            "iterations": self.iterations, "converged": self.converged, "repeats": self.repeats,
            "traces": [t.as_dict() for t in self.traces],
        }


def subsample_indices(n: int, b: int, rng) -> np.ndarray:
    """``b`` distinct row indices out of ``n``, sorted."""
    if b >= n:
        raise ParameterError(f"subsample size b={b} must be smaller than n={n}")
    if b < 1:
        raise ParameterError("subsample size must be positive")
    return np.sort(rng.choice(n, size=b, replace=False))


def edge_instability(adjacencies) -> float:
    """Mean over unordered pairs of ``2 p (1 - p)``, ``p`` the selection frequency."""
    mats = [np.asarray(a) for a in adjacencies]
    if len(mats) < 2:
        raise ParameterError("need at least two adjacency matrices")
    shape = mats[0].shape
    if len(shape) != 2 or shape[0] != shape[1] or any(m.shape != shape for m in mats):
        raise ParameterError("adjacency matrices must be square and share one shape")
    p = shape[0]
    if p < 2:
        return 0.0
    iu = np.triu_indices(p, 1)
    freq = np.mean([m[iu] != 0 for m in mats], axis=0)
    return float(np.mean(2 * freq * (1 - freq)))


def monotonize(instability) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(instability, dtype=float))


def stars_choice(monotonized, threshold: float) -> int:
    """Last index whose monotonized instability is within ``threshold`` (0 if none)."""
    ok = np.flatnonzero(np.asarray(monotonized) <= threshold)
    return int(ok[-1]) if ok.size else 0


def path_order(axis: str, values) -> np.ndarray:
    """Sort candidates sparse to dense: penalties descending, ``c`` ascending."""
    if axis not in AXES:
        raise ParameterError(f"unknown axis {axis!r}")
    v = np.unique(np.asarray(values, dtype=float))
    return v if axis == "c" else v[::-1]


def _subsample_sets(n: int, cfg: StabilityConfig, stream: int):
    b = cfg.size_for(n)
    children = np.random.SeedSequence(cfg.seed, spawn_key=(stream,)).spawn(cfg.num_subsamples)
    return [subsample_indices(n, b, np.random.default_rng(ch)) for ch in children]


def _hyper_at(axis, value, fixed):
    if axis == "lambda":
        return Hyperparameters(value, value, 0.0)
    params = dict(fixed)
    params[axis] = value
    if params.get("lambda_w", 0) < 0:
        raise AssertionError("sentinel lambda_w reached the solver")
    return Hyperparameters(params["lambda_w"], params["lambda_b"], params["c"])


def _fit_chain(data, rows, axis, path, fixed, partition, conv, standardize):
    S = empirical_covariance(data[rows], standardize=standardize)
    prev = None
    adjs = []
    for value in path:
        hyper = _hyper_at(axis, value, fixed)
        try:
            if axis == "lambda":
                f = fit_glasso(S, hyper.lambda_w, conv, warm_start=prev)
            else:
                f = fit(S, hyper, partition, conv, warm_start=prev)
        except CoglassoError as exc:
            raise type(exc)(f"{exc} [grid point {axis}={value}]") from exc
        adjs.append(f.adjacency)
        prev = f
    return adjs


def stars_sweep(data, axis_values, fixed: Optional[dict] = None, cfg: Optional[StabilityConfig] = None,
                partition: Optional[LayerPartition] = None, conv: Optional[ConvergenceConfig] = None,
                axis: str = "lambda_w", standardize: bool = True, stream: int = 0):
    """One-dimensional StARS over ``axis``.

    Parameters
    ----------
    data : ndarray, shape (n, p)
    axis_values : array-like
        Candidates; reordered internally from sparse to dense.
    fixed : dict
        Values of the two hyperparameters not being swept. Ignored for the
        plain glasso axis ``"lambda"``.
    axis : {"lambda_w", "lambda_b", "c", "lambda"}
    stream : int
        Selects the subsample stream derived from ``cfg.seed``.

    Returns
    -------
    chosen : float
    trace : SweepTrace
    """
    cfg = cfg or StabilityConfig()
    conv = conv or ConvergenceConfig()
    fixed = dict(fixed or {})
    data = np.asarray(data, dtype=float)
    path = path_order(axis, axis_values)
    if path.size == 0:
        raise ParameterError("axis_values must be non-empty")
    if axis != "lambda" and partition is None:
        raise ParameterError("a layer partition is required for coglasso sweeps")
    n = data.shape[0]
    if path.size == 1:
        return float(path[0]), SweepTrace(axis, path, np.zeros(1), np.zeros(1), 0)

    if cfg.redraw_per_value:
        per_value = [_subsample_sets(n, cfg, stream * 100003 + k) for k in range(path.size)]
        jobs = [(rows, [k]) for k in range(path.size) for rows in per_value[k]]
    else:
        jobs = [(rows, list(range(path.size))) for rows in _subsample_sets(n, cfg, stream)]

    def run(job):
        rows, idx = job
        return idx, _fit_chain(data, rows, axis, path[idx], fixed, partition, conv, standardize)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    per_point = [[] for _ in range(path.size)]
    for idx, adjs in results:
        for k, a in zip(idx, adjs):
            per_point[k].append(a)
    D = np.array([edge_instability(a) for a in per_point])
    edges = np.array([np.mean([np.triu(a, 1).sum() for a in adjs]) for adjs in per_point])
    Dbar = monotonize(D)
    k = stars_choice(Dbar, cfg.instability_threshold)
    logger.debug("%s sweep: D=%s chosen=%s", axis, np.round(D, 4), path[k])
    return float(path[k]), SweepTrace(axis, path, D, Dbar, k, edges)


SweepFn = Callable[..., tuple]


def xstars(data, lambda_w_grid, lambda_b_grid, c_grid, cfg: Optional[StabilityConfig] = None,
           partition: Optional[LayerPartition] = None, conv: Optional[ConvergenceConfig] = None,
           max_iter: int = MAX_ITER, sweep: Optional[SweepFn] = None, standardize: bool = True) -> SelectionResult:
    """Alternate StARS sweeps over ``lambda_w``, ``lambda_b`` and ``c``.

    Starts from ``lambda_b = min(lambda_b_grid)`` and ``c = max(c_grid)``;
    ``lambda_w`` starts at the sentinel -1 and is always swept first. A
    counter is incremented whenever a sweep reproduces the current value and
    reset otherwise; the loop ends when it reaches 2 or after ``max_iter``
    sweeps. ``sweep(axis, values, fixed)`` may be supplied to replace the
    StARS sweep (it must return ``(value, trace_or_None)``).
    """
    grids = {"lambda_w": np.asarray(lambda_w_grid, float), "lambda_b": np.asarray(lambda_b_grid, float),
             "c": np.asarray(c_grid, float)}
    for name, g in grids.items():
        if g.size == 0:
            raise ParameterError(f"{name} grid is empty")
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")
    if sweep is None:
        def sweep(axis, values, fixed):
            return stars_sweep(data, values, fixed, cfg, partition, conv, axis=axis,
                               standardize=standardize)

    current = {"lambda_w": -1.0, "lambda_b": float(grids["lambda_b"].min()),
               "c": float(grids["c"].max())}
    converged = 0
    it = 0
    traces = []
    order = ("lambda_w", "lambda_b", "c")
    turn = 0
    while converged < 2 and it < max_iter:
        axis = order[turn]
        fixed = {k: v for k, v in current.items() if k != axis}
        if axis != "lambda_w":
            assert current["lambda_w"] >= 0, "lambda_w sentinel still set"
        value, trace = sweep(axis, grids[axis], fixed)
        value = float(value)
        if trace is not None:
            traces.append(trace)
        converged = converged + 1 if value == current[axis] else 0
        current[axis] = value
        turn = (turn + 1) % 3
        it += 1
    return SelectionResult(current["lambda_w"], current["lambda_b"], current["c"], traces, it,
                           converged >= 2, converged)
