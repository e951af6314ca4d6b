"""Simulation benchmark: oracle networks and selected networks, coglasso vs glasso.

The oracle network of a method is the best grid point for a given metric
(highest F1 or MCC, lowest KLD) when the truth is known. The selected
network is the refit at the hyperparameters chosen by XStARS (coglasso) or
StARS (glasso).
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .core import GroundTruthModel, Hyperparameters, default_lambda_grid, empirical_covariance
from .exceptions import CoglassoError, NumericalError, ParameterError
from .metrics import score
from .selection import StabilityConfig, stars_sweep, xstars
from .simgen import ScenarioSpec, generate_replicates
from .solver import ConvergenceConfig, fit, fit_glasso

logger = logging.getLogger(__name__)

METRICS = ("f1", "mcc", "kld")
METHODS = ("coglasso", "glasso")
DESK_C = (0.0, 0.5, 1.0)
FULL_C = (0.0, 0.1, 0.5, 1.0, 10.0)


@dataclass(frozen=True)
class GridSpec:
    """Grid sizes; the penalty values themselves come from each dataset."""

    n_lambda_w: int = 5
    n_lambda_b: int = 5
    c_values: tuple = DESK_C
    n_lambda_glasso: int = 10
    ratio: float = 0.1

    @classmethod
    def full_scale(cls) -> "GridSpec":
        return cls(10, 10, FULL_C, 20)

    def resolve(self, S):
        """Return ``(cog_grid, glasso_grid)`` for covariance ``S``."""
        if not self.c_values:
            raise ParameterError("c grid is empty")
        cog = (default_lambda_grid(S, self.n_lambda_w, self.ratio),
               default_lambda_grid(S, self.n_lambda_b, self.ratio),
               np.asarray(self.c_values, dtype=float))
        return cog, default_lambda_grid(S, self.n_lambda_glasso, self.ratio)

    def as_dict(self) -> dict:
        return {"n_lambda_w": self.n_lambda_w, "n_lambda_b": self.n_lambda_b,
                "c_values": [float(c) for c in self.c_values],
                "n_lambda_glasso": self.n_lambda_glasso, "ratio": self.ratio}


@dataclass
class MethodOracle:
    """Per-metric optimum of one method over its grid."""

    method: str
    best: dict
    argbest: dict
    n_points: int
    n_failed: int = 0

    def as_dict(self) -> dict:
        return {"method": self.method, "best": dict(self.best), "argbest": dict(self.argbest),
                "n_points": self.n_points, "n_failed": self.n_failed}


@dataclass
class OracleRecord:
    replicate_id: int
    coglasso: MethodOracle
    glasso: MethodOracle
    grids: dict = field(default_factory=dict)

    def method(self, name: str) -> MethodOracle:
        return {"coglasso": self.coglasso, "glasso": self.glasso}[name]

    @property
    def c_at_best_f1(self) -> float:
        return self.coglasso.argbest["f1"]["c"]

    @property
    def c_at_best_mcc(self) -> float:
        return self.coglasso.argbest["mcc"]["c"]

    @property
    def c_at_best_kld(self) -> float:
        return self.coglasso.argbest["kld"]["c"]

    def as_dict(self) -> dict:
        return {"replicate_id": self.replicate_id, "coglasso": self.coglasso.as_dict(),
                "glasso": self.glasso.as_dict(), "c_at_best_f1": self.c_at_best_f1,
                "c_at_best_mcc": self.c_at_best_mcc, "c_at_best_kld": self.c_at_best_kld,
                "grids": self.grids}


@dataclass
class SelectedRecord:
    replicate_id: int
    coglasso_hyper: dict
    coglasso: dict
    glasso_lambda: float
    glasso: dict
    xstars_iterations: int
    xstars_converged: bool

    def method(self, name: str) -> dict:
        return {"coglasso": self.coglasso, "glasso": self.glasso}[name]

    def as_dict(self) -> dict:
        return {"replicate_id": self.replicate_id, "coglasso_hyper": self.coglasso_hyper,
                "coglasso": self.coglasso, "glasso_lambda": self.glasso_lambda,
                "glasso": self.glasso, "xstars_iterations": self.xstars_iterations,
                "xstars_converged": self.xstars_converged}


@dataclass
class BenchReport:
    scenario_id: Optional[int]
    oracle: list
    selected: list
    aggregates: dict
    config: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    complete: bool = True
    runtime: dict = field(default_factory=dict)

    def as_dict(self, include_runtime: bool = False) -> dict:
        out = {"scenario_id": self.scenario_id, "complete": self.complete,
               "config": self.config, "aggregates": self.aggregates,
               "failures": self.failures,
               "oracle": [r.as_dict() for r in self.oracle],
               "selected": [r.as_dict() for r in self.selected]}
        if include_runtime:
            out["runtime"] = self.runtime
        return out

    def summary_json(self) -> str:
        """Deterministic JSON (runtime excluded)."""
        return json.dumps(_jsonable(self.as_dict()), indent=2, sort_keys=True) + "\n"

    def csv_rows(self) -> list:
        """One row per replicate, kind, method and metric."""
        rows = []
        for r in self.oracle:
            for m in METHODS:
                mo = r.method(m)
                for k in METRICS:
                    h = mo.argbest[k]
                    rows.append({"kind": "oracle", "replicate": r.replicate_id, "method": m, "metric": k,
                                 "value": mo.best[k], "lambda_w": h["lambda_w"],
                                 "lambda_b": h["lambda_b"], "c": h["c"]})
        for r in self.selected:
            hyp = {"coglasso": r.coglasso_hyper,
                   "glasso": {"lambda_w": r.glasso_lambda, "lambda_b": r.glasso_lambda, "c": 0.0}}
            for m in METHODS:
                for k in METRICS:
                    rows.append({"kind": "selected", "replicate": r.replicate_id, "method": m,
                                 "metric": k, "value": r.method(m)[k], **hyp[m]})
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["kind", "replicate", "method", "metric", "value", "lambda_w", "lambda_b", "c"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _better(metric, new, old):
    if not math.isfinite(new):
        return False
    if old is None or not math.isfinite(old):
        return True
    return new < old if metric == "kld" else new > old


def _optimum(method, scored, n_failed):
    best = {k: None for k in METRICS}
    arg = {k: None for k in METRICS}
    for hyper, m in scored:
        for k in METRICS:
            if _better(k, m[k], best[k]):
                best[k], arg[k] = m[k], hyper.as_dict()
    for k in METRICS:
        if best[k] is None:
            # only NaN values for this metric; keep the first point for bookkeeping
            best[k], arg[k] = float("nan"), scored[0][0].as_dict()
    return MethodOracle(method, best, arg, len(scored) + n_failed, n_failed)


def _sweep_points(S, truth_adj, truth_theta, points, run):
    scored, failed = [], 0
    for hyper in points:
        try:
            f = run(S, hyper)
        except CoglassoError as exc:
            logger.warning("grid point %s failed: %s", hyper.as_dict(), exc)
            failed += 1
            continue
        scored.append((hyper, score(truth_adj, truth_theta, f)))
    return scored, failed


def _target_theta(truth: GroundTruthModel, standardize: bool):
    return truth.correlation_theta() if standardize else truth.theta


def oracle_sweep(data, truth: GroundTruthModel, cog_grid, glasso_grid,
                 conv: Optional[ConvergenceConfig] = None, standardize: bool = True,
                 replicate_id: int = 0) -> OracleRecord:
    """Fit every grid point of both methods and keep the per-metric optima.

    Every grid point is fitted from a cold start, so a failed point cannot
    influence any other. KLD is measured against the precision matrix of
    the standardized variables when ``standardize`` is set.
    """
    conv = conv or ConvergenceConfig()
    lw, lb, cs = (np.atleast_1d(np.asarray(g, dtype=float)) for g in cog_grid)
    lg = np.atleast_1d(np.asarray(glasso_grid, dtype=float))
    if min(lw.size, lb.size, cs.size, lg.size) == 0:
        raise ParameterError("grids must be non-empty")
    S = empirical_covariance(data, standardize=standardize)
    part = truth.partition
    target = _target_theta(truth, standardize)
    cog_pts = [Hyperparameters(a, b, c) for c, b, a in itertools.product(cs, lb, lw)]
    gl_pts = [Hyperparameters(l, l, 0.0) for l in lg]
    cog, cog_fail = _sweep_points(S, truth.adjacency, target, cog_pts,
                                  lambda S_, h: fit(S_, h, part, conv))
    gl, gl_fail = _sweep_points(S, truth.adjacency, target, gl_pts,
                                lambda S_, h: fit_glasso(S_, h.lambda_w, conv))
    for name, pts in (("coglasso", cog), ("glasso", gl)):
        if not pts:
            raise NumericalError(f"every {name} grid point failed for replicate {replicate_id}")
    grids = {"lambda_w": lw.tolist(), "lambda_b": lb.tolist(), "c": cs.tolist(), "lambda": lg.tolist()}
    return OracleRecord(replicate_id, _optimum("coglasso", cog, cog_fail),
                        _optimum("glasso", gl, gl_fail), grids)


def selection_compare(data, truth: GroundTruthModel, cog_grid, glasso_grid,
                      stability: Optional[StabilityConfig] = None,
                      conv: Optional[ConvergenceConfig] = None, standardize: bool = True,
                      replicate_id: int = 0) -> SelectedRecord:
    """XStARS for coglasso, StARS for glasso, then refit both on the full data."""
    stability = stability or StabilityConfig()
    conv = conv or ConvergenceConfig()
    part = truth.partition
    target = _target_theta(truth, standardize)
    sel = xstars(data, cog_grid[0], cog_grid[1], cog_grid[2], stability, part, conv,
                 standardize=standardize)
    lam, _ = stars_sweep(data, glasso_grid, None, stability, None, conv, axis="lambda",
                         standardize=standardize, stream=1)
    S = empirical_covariance(data, standardize=standardize)
    fc = fit(S, sel.hyper, part, conv)
    fg = fit_glasso(S, lam, conv)
    return SelectedRecord(replicate_id, sel.hyper.as_dict(), score(truth.adjacency, target, fc),
                          float(lam), score(truth.adjacency, target, fg), sel.iterations,
                          sel.converged)


def aggregate(oracle: list, selected: list) -> dict:
    """Median and quartiles per kind, method and metric (NaN values dropped)."""
    out = {}
    for kind, recs in (("oracle", oracle), ("selected", selected)):
        if not recs:
            continue
        out[kind] = {}
        for m in METHODS:
            out[kind][m] = {}
            for k in METRICS:
                if kind == "oracle":
                    vals = [r.method(m).best[k] for r in recs]
                else:
                    vals = [r.method(m)[k] for r in recs]
                v = np.array([x for x in vals if math.isfinite(x)], dtype=float)
                if v.size == 0:
                    out[kind][m][k] = {"median": float("nan"), "q1": float("nan"),
                                       "q3": float("nan"), "count": 0}
                    continue
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                out[kind][m][k] = {"median": float(med), "q1": float(q1), "q3": float(q3),
                                   "count": int(v.size)}
    if oracle:
        cs = [r.c_at_best_f1 for r in oracle]
        out["c_positive_at_best_f1"] = float(np.mean([c > 0 for c in cs]))
        out["coglasso_f1_ge_glasso"] = float(np.mean(
            [r.coglasso.best["f1"] >= r.glasso.best["f1"] for r in oracle]))
    return out


def run_scenario(spec: ScenarioSpec, num_replicates: int = 20, seed=0,
                 grids: Optional[GridSpec] = None, conv: Optional[ConvergenceConfig] = None,
                 stability: Optional[StabilityConfig] = None, selection: bool = True,
                 threads: int = 1, standardize: bool = True) -> BenchReport:
    """Generate a truth and replicates, then run the oracle and selection comparisons.

    A replicate that raises is listed in ``failures`` and the report is
    flagged incomplete. Wall-clock timings go to ``runtime`` only, which is
    left out of the deterministic summary.
    """
    if num_replicates < 1:
        raise ParameterError("num_replicates must be at least 1")
    if threads < 1:
        raise ParameterError("threads must be at least 1")
    grids = grids or GridSpec()
    conv = conv or ConvergenceConfig()
    stability = stability or StabilityConfig(seed=int(seed))
    t0 = time.perf_counter()
    truth, datasets = generate_replicates(spec, num_replicates, seed)
    t_gen = time.perf_counter() - t0

    def one(r):
        X = datasets[r]
        t = time.perf_counter()
        try:
            S = empirical_covariance(X, standardize=standardize)
            cog, gl = grids.resolve(S)
            orc = oracle_sweep(X, truth, cog, gl, conv, standardize, r)
            sel = selection_compare(X, truth, cog, gl, stability, conv, standardize, r) if selection else None
            return r, orc, sel, None, time.perf_counter() - t
        except CoglassoError as exc:
            return r, None, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(num_replicates)))
    else:
        results = [one(r) for r in range(num_replicates)]

    oracle, selected, failures, timing = [], [], [], []
    for r, orc, sel, err, dt in results:
        timing.append(dt)
        if err is not None:
            failures.append({"replicate": r, "error": err})
            continue
        oracle.append(orc)
        if sel is not None:
            selected.append(sel)
    config = {"scenario": spec.as_dict(), "num_replicates": num_replicates, "seed": seed,
              "grids": grids.as_dict(), "selection": selection, "standardize": standardize,
              "convergence": asdict(conv), "stability": asdict(stability),
              "truth_epsilon": truth.epsilon, "truth_activation": truth.activation}
    config["stability"].pop("threads", None)
    return BenchReport(spec.scenario_id, oracle, selected, aggregate(oracle, selected), config,
                       failures, complete=not failures,
                       runtime={"generate_s": t_gen, "replicate_s": timing,
                                "total_s": time.perf_counter() - t0})
