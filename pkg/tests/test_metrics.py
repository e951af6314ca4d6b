import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coglasso.core import Hyperparameters, LayerPartition
from coglasso.exceptions import NumericalError, ParameterError
from coglasso.metrics import Confusion, confusion, f1, kld, mcc, score
from coglasso.solver import fit


def _adj(p, pairs):
    A = np.zeros((p, p), dtype=np.int8)
    for a, b in pairs:
        A[a, b] = A[b, a] = 1
    return A


def _random_adj(rng, p, dens):
    A = np.triu(rng.random((p, p)) < dens, 1).astype(np.int8)
    return A + A.T


def _random_pd(rng, p):
    M = rng.standard_normal((p, p))
    return M @ M.T + 0.3 * np.eye(p)


def test_confusion_identity():
    A = _adj(5, [(0, 1), (2, 4)])
    c = confusion(A, A)
    assert c.fp == 0 and c.fn == 0 and c.tp == 2 and c.total == 10


def test_confusion_empty_estimate():
    c = confusion(_adj(4, [(0, 1), (1, 2), (2, 3)]), np.zeros((4, 4)))
    assert (c.tp, c.fp, c.fn) == (0, 0, 3)


def test_confusion_hand_count():
    # 1-based truth {12, 13}, estimate {12, 24}
    c = confusion(_adj(4, [(0, 1), (0, 2)]), _adj(4, [(0, 1), (1, 3)]))
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 3)


def test_confusion_validation():
    with pytest.raises(ParameterError):
        confusion(np.zeros((3, 3)), np.zeros((4, 4)))
    bad = np.zeros((3, 3))
    bad[0, 1] = 1
    with pytest.raises(ParameterError):
        confusion(bad, np.zeros((3, 3)))
    with pytest.raises(ParameterError):
        confusion(np.eye(3), np.zeros((3, 3)))


def test_f1_examples():
    assert f1(Confusion(4, 0, 6, 0)) == 1.0
    assert f1(Confusion(0, 3, 4, 2)) == 0.0
    assert f1(Confusion(3, 1, 0, 2)) == pytest.approx(2 / 3, abs=1e-15)


def test_mcc_examples():
    assert mcc(Confusion(4, 0, 6, 0)) == 1.0
    assert mcc(Confusion(0, 0, 6, 3)) == 0.0
    assert mcc(Confusion(3, 1, 5, 2)) == pytest.approx(13 / math.sqrt(840), abs=1e-15)


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_mcc_one_iff_perfect(tp, fp, tn, fn):
    c = Confusion(tp, fp, tn, fn)
    perfect = fp == 0 and fn == 0 and tp > 0 and tn > 0
    assert (mcc(c) == pytest.approx(1.0, abs=1e-12)) == perfect
    assert -1 - 1e-12 <= mcc(c) <= 1 + 1e-12
    assert 0 <= f1(c) <= 1


def test_kld_examples():
    T = np.eye(4)
    assert kld(T, 2 * np.eye(4)) == pytest.approx(3.0, abs=1e-14)
    # the printed form bottoms out at p / 2 for identical inputs
    assert kld(T, T) == 2.0


@given(st.integers(0, 2**31), st.integers(1, 8))
@settings(max_examples=60)
def test_kld_eigen_oracle_and_symmetry(seed, p):
    rng = np.random.default_rng(seed)
    T, H = _random_pd(rng, p), _random_pd(rng, p)
    lam = np.linalg.eigvals(np.linalg.solve(H, T)).real
    # lam + 1/lam >= 2 gives the lower bound p / 2
    oracle = 0.5 * (np.sum(lam + 1 / lam) - p)
    assert kld(T, H) == pytest.approx(oracle, rel=1e-8, abs=1e-10)
    assert kld(T, H) == kld(H, T)
    assert kld(T, H) >= p / 2 - 1e-10


def test_kld_rejects_non_pd():
    with pytest.raises(NumericalError, match="eigenvalue"):
        kld(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ParameterError):
        kld(np.eye(2), np.eye(3))


@given(st.integers(0, 2**31))
@settings(max_examples=30)
def test_scores_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(3, 10))
    T, E = _random_adj(rng, p, 0.3), _random_adj(rng, p, 0.3)
    perm = rng.permutation(p)
    c1 = confusion(T, E)
    c2 = confusion(T[np.ix_(perm, perm)], E[np.ix_(perm, perm)])
    assert c1 == c2
    assert f1(c1) == f1(c2) and mcc(c1) == mcc(c2)


def test_score_on_fit():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((40, 5))
    S = np.cov(X, rowvar=False, bias=True)
    f = fit(S, Hyperparameters(0.1, 0.1, 0.5), LayerPartition(3, 2))
    m = score(f.adjacency, f.Theta_hat, f)
    assert m["f1"] == (1.0 if f.edge_count() else 0.0)
    assert m["kld"] == pytest.approx(2.5, abs=1e-12)
