"""Per-stratum correlation matrices and their similarity to the national one."""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cohort import Cohort
from .errors import ContractViolation, UndefinedScoreError
from .stats import centered_ranks, rank_correlation, holm_bonferroni
from .tspm import (
    BUCKETS, N_BUCKETS, NATIONAL, Granularity, MinedStratum, Stratum, gather_events, mine_events, strata_at,
)

DEFAULT_ALPHA = 0.05
DEFAULT_SKEWERS = 10_000
DEFAULT_SEED = 20160101
DEFAULT_CENSOR = 11


class Method(str, enum.Enum):
    RandomSkewers = "RandomSkewers"
    OneMinusMAD = "OneMinusMAD"


@dataclass
class CorrelationMatrixSet:
    """Significance-masked Spearman matrices, one C x C matrix per lag bucket.

    ``rho[b, i, j]`` is the correlation for antecedent ``i``, consequent
    ``j`` in bucket ``b`` when it survived the Holm-Bonferroni step-down,
    else 0. ``raw_rho``, ``p_value`` and ``p_adjusted`` are NaN where no
    test was possible.
    """

    stratum: Stratum
    granularity: Granularity
    labels: tuple[str, ...]
    patient_count: int
    rho: np.ndarray
    raw_rho: np.ndarray
    p_value: np.ndarray
    p_adjusted: np.ndarray
    significant: np.ndarray
    tests: int

    @property
    def size(self) -> int:
        return len(self.labels)

    def block_matrix(self) -> np.ndarray:
        """The four bucket matrices laid out block-diagonally (4C x 4C)."""
        c = self.size
        out = np.zeros((N_BUCKETS * c, N_BUCKETS * c))
        for b in range(N_BUCKETS):
            out[b * c:(b + 1) * c, b * c:(b + 1) * c] = self.rho[b]
        return out


def build_matrices(mined: MinedStratum, alpha: float = DEFAULT_ALPHA) -> CorrelationMatrixSet:
    """Correlate each antecedent's event count with each pair-bucket count.

    For every (antecedent, consequent, bucket) the two per-patient vectors
    span all stratum patients; the family for Holm-Bonferroni is every
    defined test in the stratum.
    """
    if not 0.0 < alpha < 1.0:
        raise ContractViolation(f"alpha must lie in (0, 1), got {alpha}")
    c = mined.size
    shape = (N_BUCKETS, c, c)
    raw = np.full(shape, np.nan)
    pval = np.full(shape, np.nan)
    n = mined.patient_count
    m = mined.pair_counts
    if n >= 3:
        for a in range(c):
            rx = centered_ranks(mined.event_counts[:, a])
            if rx is None:
                continue
            for b in range(N_BUCKETS):
                for q in range(c):
                    col = mined.column(a, q, b)
                    lo, hi = m.indptr[col], m.indptr[col + 1]
                    if lo == hi:
                        continue  # all-zero column is constant
                    y = np.zeros(n, dtype=np.int64)
                    y[m.indices[lo:hi]] = m.data[lo:hi]
                    ry = centered_ranks(y)
                    if ry is None:
                        continue
                    out = rank_correlation(rx, ry)
                    raw[b, a, q] = out.rho
                    pval[b, a, q] = out.p_value
    defined = ~np.isnan(pval)
    adjusted = np.full(shape, np.nan)
    significant = np.zeros(shape, dtype=bool)
    tests = int(defined.sum())
    if tests:
        mt = holm_bonferroni(pval[defined], alpha)
        adjusted[defined] = mt.adjusted
        significant[defined] = mt.reject
    rho = np.where(significant, raw, 0.0)
    return CorrelationMatrixSet(
        mined.stratum, mined.granularity, mined.labels, n, rho, raw, pval, adjusted, significant, tests,
    )


def skewers(n_skewers: int, dim: int, seed: int) -> np.ndarray:
    """Unit-length random directions; row ``j`` depends only on (seed, j, dim)."""
    if n_skewers < 1:
        raise ContractViolation(f"n_skewers must be >= 1, got {n_skewers}")
    v = np.random.default_rng(seed).standard_normal((n_skewers, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


def _check_pair(m1: np.ndarray, m2: np.ndarray) -> None:
    if m1.ndim != 2 or m1.shape[0] != m1.shape[1] or m1.shape != m2.shape:
        raise ContractViolation(f"need two square matrices of equal size, got {m1.shape} and {m2.shape}")


def _mean_cosine(r1: np.ndarray, r2: np.ndarray) -> float:
    # rescale rows by their largest entry so tiny responses do not underflow
    s1 = np.abs(r1).max(axis=1)
    s2 = np.abs(r2).max(axis=1)
    ok = (s1 > 0) & (s2 > 0)
    if not ok.any():
        raise UndefinedScoreError("every skewer produced a zero response; similarity undefined")
    r1 = r1[ok] / s1[ok, None]
    r2 = r2[ok] / s2[ok, None]
    n1 = np.sqrt(np.einsum("ij,ij->i", r1, r1))
    n2 = np.sqrt(np.einsum("ij,ij->i", r2, r2))
    cos = np.einsum("ij,ij->i", r1, r2) / (n1 * n2)
    return float(np.clip(cos, -1.0, 1.0).mean())


def random_skewers(m1, m2, n_skewers: int = DEFAULT_SKEWERS, seed: int = DEFAULT_SEED) -> float:
    """Mean cosine between the responses ``m1 @ v`` and ``m2 @ v`` over random unit ``v``.

    Draws where either response is the zero vector are skipped.
    """
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    _check_pair(m1, m2)
    v = skewers(n_skewers, m1.shape[0], seed)
    return _mean_cosine(v @ m1.T, v @ m2.T)


def one_minus_mad(m1, m2) -> float:
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    if m1.shape != m2.shape or m1.ndim != 2:
        raise ContractViolation(f"need two matrices of equal size, got {m1.shape} and {m2.shape}")
    return 1.0 - float(np.abs(m1 - m2).mean())


@dataclass(frozen=True)
class SimilarityScore:
    stratum: str
    level: str
    method: Method
    value: float | None
    n_skewers: int | None
    seed: int | None
    censored: bool
    patient_count: int

    @property
    def scored(self) -> bool:
        return not self.censored and self.value is not None


class SkewerScorer:
    """Scores many strata against one reference, reusing the skewers and
    the reference's responses."""

    def __init__(self, reference: np.ndarray, n_skewers: int, seed: int):
        self.reference = np.asarray(reference, dtype=float)
        self.v = skewers(n_skewers, self.reference.shape[0], seed)
        self.ref_response = self.v @ self.reference.T

    def __call__(self, other: np.ndarray) -> float:
        other = np.asarray(other, dtype=float)
        _check_pair(self.reference, other)
        return _mean_cosine(self.ref_response, self.v @ other.T)


def _matrices_task(args):
    stratum, granularity, codebook, pids, patient, day, code, alpha = args
    mined = mine_events(stratum, granularity, codebook, pids, patient, day, code)
    return build_matrices(mined, alpha)


def stratum_matrix_sets(
    cohort: Cohort,
    strata: Sequence[Stratum],
    granularity: Granularity = Granularity.Category5,
    alpha: float = DEFAULT_ALPHA,
    censor_threshold: int = 0,
    workers: int = 1,
) -> dict[Stratum, CorrelationMatrixSet | int]:
    """Matrix sets for each stratum, keyed in input order.

    Strata below ``censor_threshold`` map to their bare patient count and
    are never correlated. Work is spread over ``workers`` processes; each
    stratum is computed by exactly one worker, so results do not depend on
    the worker count.
    """
    pids_all = cohort.patients["patient_id"].to_numpy()
    tasks, out = [], {}
    for s in strata:
        idx = np.flatnonzero(s.patient_mask(cohort))
        if len(idx) < censor_threshold:
            out[s] = int(len(idx))
            continue
        patient, day, code = gather_events(cohort, idx)
        tasks.append((s, granularity, cohort.codebook, pids_all[idx], patient, day, code, alpha))
        out[s] = None
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_matrices_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_matrices_task(t) for t in tasks]
    for t, res in zip(tasks, results):
        out[t[0]] = res
    return out


def score_matrix_sets(
    national: CorrelationMatrixSet,
    sets: dict[Stratum, CorrelationMatrixSet | int],
    method: Method = Method.RandomSkewers,
    n_skewers: int = DEFAULT_SKEWERS,
    seed: int = DEFAULT_SEED,
    censor_threshold: int = DEFAULT_CENSOR,
) -> list[SimilarityScore]:
    method = Method(method)
    ref = national.block_matrix()
    scorer = SkewerScorer(ref, n_skewers, seed) if method is Method.RandomSkewers else None
    rs_meta = (n_skewers, seed) if method is Method.RandomSkewers else (None, None)
    out = []
    for s, ms in sets.items():
        count = ms if isinstance(ms, int) else ms.patient_count
        if count < censor_threshold or isinstance(ms, int):
            out.append(SimilarityScore(s.key or "national", s.level, method, None, *rs_meta, True, count))
            continue
        if method is Method.RandomSkewers:
            try:
                value = scorer(ms.block_matrix())
            except UndefinedScoreError:
                value = None
        else:
            value = one_minus_mad(ref, ms.block_matrix())
        out.append(SimilarityScore(s.key or "national", s.level, method, value, *rs_meta, False, count))
    return out


def score_strata(
    cohort: Cohort,
    level: str = "county",
    method: Method = Method.RandomSkewers,
    granularity: Granularity = Granularity.Category5,
    alpha: float = DEFAULT_ALPHA,
    n_skewers: int = DEFAULT_SKEWERS,
    seed: int = DEFAULT_SEED,
    censor_threshold: int = DEFAULT_CENSOR,
    workers: int = 1,
) -> list[SimilarityScore]:
    """Score every stratum at ``level`` against the national reference.

    A stratum whose correlation matrices are all zero has no random-skewers
    score; it is reported uncensored with ``value=None``.
    """
    if censor_threshold < 1:
        raise ContractViolation("censor threshold must be >= 1")
    national = stratum_matrix_sets(cohort, [NATIONAL], granularity, alpha)[NATIONAL]
    strata = strata_at(cohort, level)
    if level.lower() == "national":
        sets = {NATIONAL: national}
    else:
        sets = stratum_matrix_sets(cohort, strata, granularity, alpha, censor_threshold, workers)
    return score_matrix_sets(national, sets, method, n_skewers, seed, censor_threshold)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else repr(float(x))
    return str(x)


MATRIX_HEADER = ["stratum", "level", "bucket", "antecedent", "consequent", "rho", "significant",
                 "raw_rho", "p_value", "p_adjusted"]


def write_matrices(path: str | Path, sets: Iterable[CorrelationMatrixSet]) -> int:
    rows = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATRIX_HEADER)
        for ms in sets:
            for b, bucket in enumerate(BUCKETS):
                for i, a in enumerate(ms.labels):
                    for j, q in enumerate(ms.labels):
                        w.writerow([
                            ms.stratum.key or "national", ms.stratum.level, bucket.value, a, q,
                            _fmt(float(ms.rho[b, i, j])), _fmt(bool(ms.significant[b, i, j])),
                            _fmt(ms.raw_rho[b, i, j]), _fmt(ms.p_value[b, i, j]), _fmt(ms.p_adjusted[b, i, j]),
                        ])
                        rows += 1
    return rows


SCORE_HEADER = ["stratum", "level", "method", "value", "patient_count", "censored", "n_skewers", "seed"]


def write_scores(path: str | Path, scores: Iterable[SimilarityScore]) -> int:
    rows = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_HEADER)
        for s in scores:
            w.writerow([s.stratum, s.level, s.method.value, _fmt(s.value), s.patient_count,
                        _fmt(s.censored), _fmt(s.n_skewers), _fmt(s.seed)])
            rows += 1
    return rows


def read_scores(path: str | Path) -> list[SimilarityScore]:
    from .errors import InputError

    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read scores {path}: {exc}") from exc
    out = []
    with fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"{path}: score header lacks {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(SimilarityScore(
                    stratum=row["stratum"],
                    level=row["level"],
                    method=Method(row["method"]),
                    value=float(row["value"]) if row["value"] else None,
                    n_skewers=int(row["n_skewers"]) if row["n_skewers"] else None,
                    seed=int(row["seed"]) if row["seed"] else None,
                    censored=row["censored"].strip().lower() == "true",
                    patient_count=int(row["patient_count"]),
                ))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
    return out
