import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coglasso.core import LayerPartition
from coglasso.exceptions import ParameterError
from coglasso.selection import (StabilityConfig, default_subsample_size, edge_instability,
                                monotonize, path_order, stars_choice, stars_sweep,
                                subsample_indices, xstars)
from coglasso.simgen import generate_replicates, scenario_preset

SMALL = StabilityConfig(num_subsamples=6, seed=3)


@pytest.fixture(scope="module")
def small_data():
    rng = np.random.default_rng(0)
    L = np.eye(8) + 0.5 * np.diag(np.ones(7), -1)
    return rng.standard_normal((40, 8)) @ L.T, LayerPartition(5, 3)


def test_subsample_bounds():
    rng = np.random.default_rng(0)
    with pytest.raises(ParameterError):
        subsample_indices(5, 5, rng)
    # floor(10 sqrt(50)) = 70 exceeds n = 50
    assert int(np.floor(10 * np.sqrt(50))) == 70
    with pytest.raises(ParameterError):
        subsample_indices(50, 70, rng)


def test_subsample_deterministic():
    a = subsample_indices(30, 10, np.random.default_rng(9))
    b = subsample_indices(30, 10, np.random.default_rng(9))
    assert np.array_equal(a, b) and len(set(a)) == 10 and a.max() < 30


def test_default_subsample_size():
    assert default_subsample_size(50) == 40
    assert default_subsample_size(400) == 200
    assert default_subsample_size(3) == 2
    with pytest.raises(ParameterError):
        StabilityConfig(subsample_size=60).size_for(50)


def test_instability_examples():
    A = np.zeros((4, 4), dtype=np.int8)
    A[0, 1] = A[1, 0] = 1
    assert edge_instability([A, A, A]) == 0.0
    E = np.zeros_like(A)
    # one edge in half of 4 matrices; 6 pairs
    assert edge_instability([A, A, E, E]) == pytest.approx(0.5 / 6, abs=1e-15)
    F = 1 - np.eye(4, dtype=np.int8)
    assert edge_instability([F, E, F, E]) == 0.5


@given(st.integers(0, 2**31), st.integers(2, 12), st.integers(2, 7))
@settings(max_examples=40)
def test_instability_range(seed, N, p):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(N):
        U = np.triu(rng.random((p, p)) < 0.4, 1).astype(np.int8)
        mats.append(U + U.T)
    assert 0.0 <= edge_instability(mats) <= 0.5


def test_monotonized_choice_example():
    D = [0.0, 0.01, 0.2, 0.04]
    Dbar = monotonize(D)
    assert np.array_equal(Dbar, [0.0, 0.01, 0.2, 0.2])
    assert stars_choice(Dbar, 0.05) == 1
    assert stars_choice([0.0, 0.0, 0.0], 0.05) == 2
    assert stars_choice([0.1, 0.2], 0.05) == 0


def test_path_order():
    assert np.array_equal(path_order("lambda_w", [0.1, 0.5, 0.3]), [0.5, 0.3, 0.1])
    assert np.array_equal(path_order("c", [1, 0, 10]), [0, 1, 10])
    with pytest.raises(ParameterError):
        path_order("gamma", [1])


def test_single_value_axis(small_data):
    X, part = small_data
    v, tr = stars_sweep(X, [0.3], {"lambda_b": 0.2, "c": 0.5}, SMALL, part, axis="lambda_w")
    assert v == 0.3 and tr.chosen_index == 0


def test_empty_graphs_choose_densest(small_data):
    X, _ = small_data
    v, tr = stars_sweep(X, [5.0, 3.0, 4.0], None, SMALL, axis="lambda")
    assert np.all(tr.monotonized == 0)
    assert v == 3.0


def test_sweep_trace_properties(small_data):
    X, part = small_data
    grid = np.geomspace(0.6, 0.03, 6)
    v, tr = stars_sweep(X, grid, {"lambda_b": 0.2, "c": 0.5}, SMALL, part, axis="lambda_w")
    assert v in grid
    assert np.all(np.diff(tr.monotonized) >= 0)
    assert np.all((tr.instability >= 0) & (tr.instability <= 0.5))
    # densest end is unstable on this fixture, so a threshold is actually binding
    assert tr.monotonized[-1] > SMALL.instability_threshold
    v2, tr2 = stars_sweep(X, grid, {"lambda_b": 0.2, "c": 0.5}, SMALL, part, axis="lambda_w")
    assert v2 == v and np.array_equal(tr.instability, tr2.instability)


def test_threads_do_not_change_results(small_data):
    X, part = small_data
    grid = np.geomspace(0.6, 0.03, 5)
    a = stars_sweep(X, grid, {"lambda_w": 0.2, "lambda_b": 0.2}, SMALL, part, axis="c")[1]
    cfg = StabilityConfig(num_subsamples=6, seed=3, threads=3)
    b = stars_sweep(X, grid, {"lambda_w": 0.2, "lambda_b": 0.2}, cfg, part, axis="c")[1]
    assert np.array_equal(a.instability, b.instability)


def test_redraw_per_value(small_data):
    X, part = small_data
    grid = np.geomspace(0.6, 0.03, 4)
    cfg = StabilityConfig(num_subsamples=6, seed=3, redraw_per_value=True)
    a = stars_sweep(X, grid, {"lambda_b": 0.2, "c": 0.5}, cfg, part, axis="lambda_w")[1]
    b = stars_sweep(X, grid, {"lambda_b": 0.2, "c": 0.5}, SMALL, part, axis="lambda_w")[1]
    assert np.all(np.diff(a.monotonized) >= 0)
    assert not np.array_equal(a.instability, b.instability)


def test_sentinel_never_reaches_solver(small_data):
    X, part = small_data
    with pytest.raises(AssertionError):
        stars_sweep(X, [0.1, 0.2], {"lambda_w": -1.0, "c": 0.0}, SMALL, part, axis="lambda_b")


def _stub(values, calls):
    def sweep(axis, grid, fixed):
        calls.append((axis, dict(fixed)))
        return values[axis], None
    return sweep


def test_xstars_stub_stops_at_third_sweep():
    calls = []
    gw, gb, gc = [0.1, 0.2, 0.4], [0.05, 0.1], [0.0, 0.5, 1.0]
    res = xstars(None, gw, gb, gc, sweep=_stub({"lambda_w": 0.2, "lambda_b": 0.05, "c": 1.0}, calls))
    assert res.iterations == 3 and res.converged
    assert (res.lambda_w_hat, res.lambda_b_hat, res.c_hat) == (0.2, 0.05, 1.0)
    assert [a for a, _ in calls] == ["lambda_w", "lambda_b", "c"]
    assert calls[0][1] == {"lambda_b": 0.05, "c": 1.0}


def test_xstars_stub_generic_constants():
    calls = []
    res = xstars(None, [0.1, 0.2], [0.05, 0.1], [0.0, 0.5, 1.0],
                 sweep=_stub({"lambda_w": 0.2, "lambda_b": 0.1, "c": 0.5}, calls))
    # changes at sweeps 1-3, then lambda_w and lambda_b repeat
    assert res.iterations == 5 and res.converged
    assert (res.lambda_w_hat, res.lambda_b_hat, res.c_hat) == (0.2, 0.1, 0.5)


def test_xstars_max_iter_one():
    calls = []
    res = xstars(None, [0.1, 0.2], [0.05, 0.1], [0.0, 1.0], max_iter=1,
                 sweep=_stub({"lambda_w": 0.1, "lambda_b": 0.1, "c": 0.0}, calls))
    assert res.iterations == 1 and len(calls) == 1 and not res.converged
    assert (res.lambda_w_hat, res.lambda_b_hat, res.c_hat) == (0.1, 0.05, 1.0)


@given(st.integers(0, 2**31), st.integers(1, 12))
@settings(max_examples=60)
def test_xstars_random_stub_invariants(seed, max_iter):
    rng = np.random.default_rng(seed)
    grids = {"lambda_w": [0.1, 0.2, 0.3], "lambda_b": [0.05, 0.1], "c": [0.0, 1.0]}
    trace = []

    def sweep(axis, grid, fixed):
        v = float(rng.choice(grid))
        trace.append(v)
        return v, None

    res = xstars(None, grids["lambda_w"], grids["lambda_b"], grids["c"], max_iter=max_iter, sweep=sweep)
    assert res.iterations == len(trace) <= max_iter
    assert res.lambda_w_hat in grids["lambda_w"]
    assert res.lambda_b_hat in grids["lambda_b"] and res.c_hat in grids["c"]
    if res.iterations < max_iter:
        assert res.converged


def test_xstars_singleton_grids(small_data):
    X, part = small_data
    res = xstars(X, [0.2], [0.1], [0.5], SMALL, part)
    assert res.iterations == 3 and res.converged
    assert (res.lambda_w_hat, res.lambda_b_hat, res.c_hat) == (0.2, 0.1, 0.5)


def test_xstars_real_run_deterministic():
    spec = scenario_preset(1)
    _, data = generate_replicates(spec, 1, seed=4)
    gw, gb, gc = np.geomspace(0.5, 0.1, 3), np.geomspace(0.4, 0.08, 3), [0.0, 1.0]
    cfg = StabilityConfig(num_subsamples=5, seed=11)
    a = xstars(data[0], gw, gb, gc, cfg, spec.partition)
    b = xstars(data[0], gw, gb, gc, cfg, spec.partition)
    assert a.as_dict() == b.as_dict()
    assert a.lambda_w_hat in gw and a.lambda_b_hat in gb and a.c_hat in gc
    assert 1 <= a.iterations <= 10
