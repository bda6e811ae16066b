import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from dxdecay.errors import ContractViolation
from dxdecay.stats import average_ranks, holm_bonferroni, spearman, spearman_many


def oracle_rho(x, y):
    """Rank by explicit tie-averaging loops, then textbook Pearson."""
    def ranks(v):
        out = []
        for a in v:
            less = sum(1 for b in v if b < a)
            equal = sum(1 for b in v if b == a)
            out.append(less + (equal + 1) / 2)
        return out
    rx, ry = ranks(x), ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return sxy / math.sqrt(sxx * syy)


def test_examples():
    assert spearman([1, 2, 3], [10, 20, 30]).rho == pytest.approx(1.0, abs=1e-15)
    assert spearman([1, 2, 3], [3, 2, 1]).rho == pytest.approx(-1.0, abs=1e-15)
    assert spearman([1, 2, 3, 4], [2, 1, 4, 3]).rho == pytest.approx(0.6, abs=1e-12)


def test_undefined_cases():
    assert not spearman([1, 1, 1], [1, 2, 3]).defined
    assert not spearman([1, 2, 3], [5, 5, 5]).defined
    assert not spearman([1, 2], [1, 2]).defined
    with pytest.raises(ContractViolation):
        spearman([1, 2, 3], [1, 2])


def test_pvalue_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(5, 60))
        x = rng.integers(0, 4, n)
        y = x + rng.integers(0, 3, n)
        out = spearman(x, y)
        if not out.defined:
            continue
        ref = sps.spearmanr(x, y)
        assert out.rho == pytest.approx(ref.statistic, abs=1e-12)
        assert out.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)


def test_perfect_correlation_pvalue_zero():
    assert spearman([1, 2, 3, 4], [1, 2, 3, 4]).p_value == 0.0


def test_ranks_integer_and_float_paths_agree():
    rng = np.random.default_rng(2)
    for _ in range(100):
        v = rng.integers(0, 6, int(rng.integers(1, 30)))
        np.testing.assert_array_equal(average_ranks(v), average_ranks(v.astype(float)))
        np.testing.assert_allclose(average_ranks(v), sps.rankdata(v))
    big = np.array([0, 10_000, 3, 3])
    np.testing.assert_array_equal(average_ranks(big), [1, 4, 2.5, 2.5])


def test_spearman_many_matches_single():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 3, 40)
    ys = [rng.integers(0, 3, 40) for _ in range(5)] + [np.zeros(40, dtype=int)]
    for got, y in zip(spearman_many(x, ys), ys):
        assert got == spearman(x, y)


vec = st.lists(st.integers(-3, 3), min_size=3, max_size=8)


@given(st.data())
def test_symmetry_and_oracle(data):
    x = data.draw(vec)
    y = data.draw(st.lists(st.integers(-3, 3), min_size=len(x), max_size=len(x)))
    a, b = spearman(x, y), spearman(y, x)
    assert a.defined == b.defined
    if a.defined:
        assert a.rho == pytest.approx(b.rho, abs=1e-12)
        assert a.rho == pytest.approx(oracle_rho(x, y), abs=1e-12)


@given(st.data())
def test_monotone_invariance(data):
    x = data.draw(vec)
    y = data.draw(st.lists(st.integers(-3, 3), min_size=len(x), max_size=len(x)))
    base = spearman(x, y)
    tx = [math.exp(v) + 7 for v in x]
    ty = [v ** 3 - 2 for v in y]
    moved = spearman(tx, ty)
    assert base.defined == moved.defined
    if base.defined:
        assert moved.rho == pytest.approx(base.rho, abs=1e-12)


# Holm-Bonferroni

def holm_oracle(p, alpha):
    """Sequential step-down written from the procedure's description."""
    m = len(p)
    order = sorted(range(m), key=lambda i: (p[i], i))
    adjusted = [0.0] * m
    running = 0.0
    for k, i in enumerate(order):
        running = max(running, min(1.0, (m - k) * p[i]))
        adjusted[i] = running
    reject = [False] * m
    for k, i in enumerate(order):
        if p[i] <= alpha / (m - k):
            reject[i] = True
        else:
            break
    return adjusted, reject


def test_holm_examples():
    r = holm_bonferroni([0.01, 0.04, 0.03], 0.05)
    np.testing.assert_allclose(r.adjusted, [0.03, 0.06, 0.06], atol=1e-15)
    assert r.reject.tolist() == [True, False, False]
    r = holm_bonferroni([1.0], 0.05)
    assert r.adjusted.tolist() == [1.0] and r.reject.tolist() == [False]
    assert holm_bonferroni([0.0001] * 10, 0.05).reject.all()


def test_holm_contract():
    with pytest.raises(ContractViolation):
        holm_bonferroni([0.5, 1.2])
    with pytest.raises(ContractViolation):
        holm_bonferroni([-0.1])
    with pytest.raises(ContractViolation):
        holm_bonferroni([0.1], alpha=1.0)
    assert holm_bonferroni([]).adjusted.shape == (0,)


def test_holm_exhaustive_grid():
    grid = [0.0, 0.005, 0.01, 0.0125, 0.02, 0.025, 0.04, 0.05, 0.3, 1.0]
    for m in range(1, 4):
        for p in itertools.product(grid, repeat=m):
            got = holm_bonferroni(list(p), 0.05)
            adj, rej = holm_oracle(list(p), 0.05)
            np.testing.assert_allclose(got.adjusted, adj, atol=1e-15)
            assert got.reject.tolist() == rej


p_lists = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12)


@given(p_lists, st.sampled_from([0.01, 0.05, 0.1]))
def test_holm_between_bonferroni_and_unadjusted(p, alpha):
    r = holm_bonferroni(p, alpha)
    p = np.asarray(p)
    bonf = p * len(p) <= alpha
    raw = p <= alpha
    assert np.all(r.reject[bonf])
    assert not np.any(r.reject & ~raw)
    assert np.array_equal(r.reject, r.adjusted <= alpha)


@settings(max_examples=50)
@given(p_lists, st.randoms(use_true_random=False))
def test_holm_permutation_equivariance(p, rnd):
    perm = list(range(len(p)))
    rnd.shuffle(perm)
    a = holm_bonferroni(p)
    b = holm_bonferroni([p[i] for i in perm])
    np.testing.assert_array_equal(b.adjusted, a.adjusted[perm])
    np.testing.assert_array_equal(b.reject, a.reject[perm])


@given(p_lists)
def test_holm_adjusted_monotone_in_sorted_order(p):
    r = holm_bonferroni(p)
    order = np.argsort(p, kind="mergesort")
    assert np.all(np.diff(r.adjusted[order]) >= 0)
