import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse, stats as sps

from dxdecay import synth
from dxdecay.cohort import build_cohort
from dxdecay.errors import ContractViolation, UndefinedScoreError
from dxdecay.similarity import (
    Method, SimilarityScore, build_matrices, one_minus_mad, random_skewers, read_scores, score_strata, skewers,
    write_matrices, write_scores,
)
from dxdecay.tspm import BUCKETS, NATIONAL, Granularity, MinedStratum, mine_stratum


def mined_from(event_counts, pair_cols, labels=("A", "B")):
    """Hand-built stratum: pair_cols maps (antecedent, consequent, bucket) -> per-patient counts."""
    event_counts = np.asarray(event_counts, dtype=np.int64)
    n, c = event_counts.shape
    dense = np.zeros((n, 4 * c * c), dtype=np.int64)
    for (a, q, b), vec in pair_cols.items():
        dense[:, (b * c + a) * c + q] = vec
    return MinedStratum(NATIONAL, Granularity.Category5, labels, np.array([f"P{i}" for i in range(n)]),
                        event_counts, sparse.csc_matrix(dense))


def test_identical_histories_give_zero_matrices():
    m = mined_from([[2, 1]] * 6, {(0, 1, 0): [2] * 6, (0, 0, 3): [1] * 6})
    ms = build_matrices(m)
    assert ms.tests == 0 and not ms.rho.any()


def test_empty_stratum():
    m = mined_from(np.zeros((0, 2)), {})
    ms = build_matrices(m)
    assert ms.tests == 0 and ms.rho.shape == (4, 2, 2) and not ms.rho.any()


def test_pair_equal_to_antecedent_count_is_perfect():
    a_counts = [0, 1, 2, 3, 1, 0, 4, 2]
    m = mined_from([[a, 1] for a in a_counts], {(0, 1, 0): a_counts})
    ms = build_matrices(m)
    assert ms.raw_rho[0, 0, 1] == pytest.approx(1.0, abs=1e-15)
    assert ms.tests == 1 and ms.rho[0, 0, 1] == pytest.approx(1.0)


def holm_reject(p, alpha):
    order = np.argsort(p, kind="mergesort")
    out = np.zeros(len(p), dtype=bool)
    for k, i in enumerate(order):
        if p[i] > alpha / (len(p) - k):
            break
        out[i] = True
    return out


def test_planted_dependence_against_scripted_oracle():
    rng = np.random.default_rng(11)
    n = 100
    a = rng.integers(0, 4, n)
    b = rng.integers(0, 3, n)
    ab_month = np.where(rng.random(n) < 0.8, a, 0)  # A->B within a month tracks A's count
    noise = rng.integers(0, 2, n)
    m = mined_from(np.column_stack([a, b]), {(0, 1, 1): ab_month, (1, 0, 3): noise * (b > 0)})
    ms = build_matrices(m, alpha=0.05)

    cells, pvals, rhos = [], [], []
    ec = np.column_stack([a, b])
    dense = m.pair_counts.toarray()
    for bk in range(4):
        for i in range(2):
            for j in range(2):
                x, y = ec[:, i], dense[:, (bk * 2 + i) * 2 + j]
                if np.ptp(x) == 0 or np.ptp(y) == 0:
                    continue
                r = sps.spearmanr(x, y)
                cells.append((bk, i, j))
                rhos.append(r.statistic)
                pvals.append(r.pvalue)
    keep = holm_reject(np.array(pvals), 0.05)
    assert ms.tests == len(cells)
    expected = np.zeros((4, 2, 2))
    for cell, r, k in zip(cells, rhos, keep):
        if k:
            expected[cell] = r
    np.testing.assert_allclose(ms.rho, expected, atol=1e-12)
    assert ms.rho[BUCKETS.index(BUCKETS[1]), 0, 1] > 0.5


def test_block_matrix_layout():
    m = mined_from([[1, 0], [2, 1], [0, 3], [3, 1]], {(0, 1, 2): [1, 2, 0, 3]})
    ms = build_matrices(m, alpha=0.5)
    block = ms.block_matrix()
    assert block.shape == (8, 8)
    np.testing.assert_array_equal(block[4:6, 4:6], ms.rho[2])
    assert not block[:4, 4:].any()


# random skewers

def test_rs_examples():
    rng = np.random.default_rng(0)
    m = rng.uniform(-1, 1, (6, 6))
    assert random_skewers(m, m, 500, 1) == pytest.approx(1.0, abs=1e-12)
    assert random_skewers(m, 3 * m, 500, 1) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractViolation):
        random_skewers(np.eye(2), np.eye(3), 10, 1)
    with pytest.raises(ContractViolation):
        random_skewers(np.eye(2), np.eye(2), 0, 1)
    with pytest.raises(UndefinedScoreError):
        random_skewers(np.zeros((3, 3)), np.eye(3), 10, 1)


def test_rs_monte_carlo_oracle():
    m2 = [[1.0, 0.5], [0.5, 1.0]]
    gen = random.Random(4242)
    total = 0.0
    n = 100_000
    for _ in range(n):
        x, y = gen.gauss(0, 1), gen.gauss(0, 1)
        r2 = (m2[0][0] * x + m2[0][1] * y, m2[1][0] * x + m2[1][1] * y)
        total += (x * r2[0] + y * r2[1]) / (math.hypot(x, y) * math.hypot(*r2))
    assert random_skewers(np.eye(2), np.array(m2), n, 7) == pytest.approx(total / n, abs=0.005)


def test_skewer_rows_depend_only_on_seed_and_index():
    a = skewers(10, 5, 3)
    b = skewers(100, 5, 3)
    np.testing.assert_array_equal(a, b[:10])
    np.testing.assert_allclose(np.linalg.norm(b, axis=1), 1.0)


matrices = st.integers(1, 8).flatmap(
    lambda d: st.tuples(*[st.lists(st.floats(-1, 1, allow_nan=False), min_size=d * d, max_size=d * d)] * 2))


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(0, 2**32 - 1))
def test_rs_identity_and_symmetry(pair, seed):
    d = int(math.isqrt(len(pair[0])))
    m1 = np.array(pair[0]).reshape(d, d)
    m2 = np.array(pair[1]).reshape(d, d)
    if np.any(m1):
        assert random_skewers(m1, m1, 200, seed) == pytest.approx(1.0, abs=1e-12)
    try:
        ab = random_skewers(m1, m2, 200, seed)
    except UndefinedScoreError:
        return
    assert random_skewers(m2, m1, 200, seed) == pytest.approx(ab, abs=1e-12)
    assert -1.0 <= ab <= 1.0


def test_rs_seed_stability():
    rng = np.random.default_rng(5)
    m1, m2 = rng.uniform(-1, 1, (20, 20)), rng.uniform(-1, 1, (20, 20))
    vals = [random_skewers(m1, m2, 10_000, s) for s in range(10)]
    assert np.std(vals) < 0.01


def test_mad_examples():
    m = np.arange(9.0).reshape(3, 3)
    assert one_minus_mad(m, m) == 1.0
    assert one_minus_mad(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    assert one_minus_mad(np.zeros((2, 2)), [[1, 0], [0, 0]]) == 0.75
    with pytest.raises(ContractViolation):
        one_minus_mad(np.zeros((2, 2)), np.zeros((3, 3)))


grid = st.lists(st.integers(-8, 8), min_size=4, max_size=4)


@given(grid, grid)
def test_mad_one_iff_equal(a, b):
    # entries on a 1/8 grid so every difference is representable next to 1
    m1, m2 = np.reshape(a, (2, 2)) / 8, np.reshape(b, (2, 2)) / 8
    assert (one_minus_mad(m1, m2) == 1.0) == bool(np.array_equal(m1, m2))


# scoring strata

@pytest.fixture(scope="module")
def boundary_cohort():
    data = synth.generate(synth.censoring_boundary(), seed=1)
    return build_cohort(data.beneficiary_table(), data.hospitalization_table())


def test_censoring_at_ten(boundary_cohort):
    scores = {s.stratum: s for s in score_strata(boundary_cohort, "county", n_skewers=2000)}
    assert scores["12003"].patient_count == 10 and scores["12003"].censored and scores["12003"].value is None
    assert scores["12005"].patient_count == 11 and not scores["12005"].censored
    assert all(s.patient_count >= 11 for s in scores.values() if not s.censored)
    strict = score_strata(boundary_cohort, "county", n_skewers=100, censor_threshold=12)
    assert {s.stratum for s in strict if s.censored} == {"12003", "12005"}


def test_national_against_itself(boundary_cohort):
    (s,) = score_strata(boundary_cohort, "national", n_skewers=2000)
    assert s.stratum == "national" and s.value == pytest.approx(1.0, abs=1e-12)
    (s,) = score_strata(boundary_cohort, "national", method=Method.OneMinusMAD)
    assert s.value == 1.0


def test_workers_do_not_change_scores(boundary_cohort):
    one = score_strata(boundary_cohort, "county", n_skewers=1000, workers=1)
    three = score_strata(boundary_cohort, "county", n_skewers=1000, workers=3)
    assert one == three


def test_swapped_transition_mass_scores_lower():
    base = {"extra_visits_mean": 5.0, "cocode": 0.0, "decay": 0.0}
    cfg = {"baseline": base, "counties": [
        {"fips": "12001", "state": "FL", "n_patients": 3000},
        {"fips": "12003", "state": "FL", "n_patients": 800},
        {"fips": "12005", "state": "FL", "n_patients": 800, "overrides": {"decay": 0.5}},
    ]}
    data = synth.generate(cfg, seed=3)
    c = build_cohort(data.beneficiary_table(), data.hospitalization_table())
    scores = {s.stratum: s.value for s in score_strata(c, "county", n_skewers=4000)}
    assert scores["12005"] < scores["12003"]


def test_score_roundtrip(tmp_path, boundary_cohort):
    scores = score_strata(boundary_cohort, "county", n_skewers=100)
    path = tmp_path / "s.csv"
    assert write_scores(path, scores) == len(scores)
    assert read_scores(path) == scores
    assert path.read_text().splitlines()[0] == "stratum,level,method,value,patient_count,censored,n_skewers,seed"


def test_matrix_export(tmp_path, boundary_cohort):
    ms = build_matrices(mine_stratum(boundary_cohort))
    path = tmp_path / "m.csv"
    assert write_matrices(path, [ms]) == 4 * 5 * 5
    header = path.read_text().splitlines()[0].split(",")
    assert header[:7] == ["stratum", "level", "bucket", "antecedent", "consequent", "rho", "significant"]


def test_code17_matrices_shape(boundary_cohort):
    ms = build_matrices(mine_stratum(boundary_cohort, NATIONAL, Granularity.Code17))
    assert ms.rho.shape == (4, 17, 17) and ms.block_matrix().shape == (68, 68)
    assert np.all(np.abs(ms.rho) <= 1) and np.all(ms.rho[~ms.significant] == 0)


def test_undefined_score_reported_uncensored():
    zero = SimilarityScore("x", "county", Method.RandomSkewers, None, 10, 1, False, 20)
    assert not zero.scored
