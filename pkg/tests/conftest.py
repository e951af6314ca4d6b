import numpy as np
import pytest

from coglasso.core import LayerPartition, empirical_covariance

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_correlation(p, n, rng):
    """Sample correlation of ``n`` correlated Gaussian draws in dimension ``p``."""
    L = rng.standard_normal((p, p)) * 0.4 + np.eye(p)
    X = rng.standard_normal((n, p)) @ L.T
    return empirical_covariance(X, standardize=True)


def random_instance(seed, p_max=20):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(3, p_max + 1))
    p_x = int(rng.integers(1, p))
    S = random_correlation(p, int(rng.integers(p // 2 + 2, 3 * p)), rng)
    return S, LayerPartition(p_x, p - p_x), rng


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
