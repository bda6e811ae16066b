"""Transitive temporal pair mining over per-patient coded event sequences.

Every ordered pair of distinct events in a patient's history is counted,
not only adjacent ones, and the gap between them is binned into one of four
lag buckets. Same-day pairs of distinct events count in both directions
because claims carry no intra-day ordering.
"""

from __future__ import annotations

import csv
import enum
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from .codebook import CATEGORIES, Codebook, DiagnosticCategory
from .cohort import Cohort, CodedEvent
from .errors import ContractViolation


class LagBucket(str, enum.Enum):
    Cooccurrence = "Cooccurrence"
    WithinOneMonth = "WithinOneMonth"
    OneToThreeMonths = "OneToThreeMonths"
    OverThreeMonths = "OverThreeMonths"


BUCKETS: tuple[LagBucket, ...] = tuple(LagBucket)
N_BUCKETS = len(BUCKETS)
MONTH_DAYS = 30
QUARTER_DAYS = 90
# upper inclusive day-lag of the first three buckets
_BUCKET_EDGES = np.array([0, MONTH_DAYS, QUARTER_DAYS])


class Granularity(str, enum.Enum):
    Code17 = "Code17"
    Category5 = "Category5"


def assign_bucket(lag_days: int) -> LagBucket:
    if lag_days < 0:
        raise ContractViolation(f"lag must be nonnegative, got {lag_days}")
    if lag_days == 0:
        return LagBucket.Cooccurrence
    if lag_days <= MONTH_DAYS:
        return LagBucket.WithinOneMonth
    if lag_days <= QUARTER_DAYS:
        return LagBucket.OneToThreeMonths
    return LagBucket.OverThreeMonths


def bucket_index(lags: np.ndarray) -> np.ndarray:
    """Vectorized :func:`assign_bucket` returning positions in :data:`BUCKETS`."""
    lags = np.asarray(lags)
    if lags.size and lags.min() < 0:
        raise ContractViolation("lags must be nonnegative")
    return np.searchsorted(_BUCKET_EDGES, lags, side="left").astype(np.int64)


def id_labels(granularity: Granularity, codebook: Codebook) -> tuple[str, ...]:
    if Granularity(granularity) is Granularity.Code17:
        return codebook.codes
    return tuple(c.value for c in CATEGORIES)


def event_ids(codes: np.ndarray, granularity: Granularity, codebook: Codebook) -> np.ndarray:
    if Granularity(granularity) is Granularity.Code17:
        return np.asarray(codes, dtype=np.int64)
    return np.asarray(codebook.category_index(), dtype=np.int64)[codes]


def pair_index(patient: np.ndarray, day: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs (i, j), i < j, of events belonging to the same patient.

    Events must be grouped by patient and sorted by day within a patient.
    Work is proportional to the number of pairs produced.
    """
    n = patient.shape[0]
    firsts, seconds = [], []
    cand = np.arange(n - 1, dtype=np.int64)
    k = 1
    while cand.size:
        j = cand + k
        cand = cand[j < n]
        j = cand + k
        same = patient[j] == patient[cand]
        cand = cand[same]
        firsts.append(cand)
        seconds.append(cand + k)
        k += 1
    if not firsts:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return np.concatenate(firsts), np.concatenate(seconds)


def enumerate_pairs(patient: np.ndarray, day: np.ndarray, ident: np.ndarray):
    """Ordered (patient, antecedent, consequent, bucket) tuples as parallel arrays."""
    i, j = pair_index(patient, day)
    lag = day[j] - day[i]
    if lag.size and lag.min() < 0:
        raise ContractViolation("events must be sorted by date within each patient")
    bucket = bucket_index(lag)
    same_day = lag == 0
    pat = np.concatenate((patient[i], patient[j[same_day]]))
    ante = np.concatenate((ident[i], ident[j[same_day]]))
    cons = np.concatenate((ident[j], ident[i[same_day]]))
    bkt = np.concatenate((bucket, bucket[same_day]))
    return pat, ante, cons, bkt


def mine_patient(events: Sequence[CodedEvent], granularity: Granularity = Granularity.Category5) -> Counter:
    """Pair-bucket counts for one patient's date-sorted events.

    Returns a ``Counter`` keyed by ``(antecedent, consequent, LagBucket)``
    where ids are code strings (Code17) or :class:`DiagnosticCategory`
    members (Category5).
    """
    granularity = Granularity(granularity)
    events = list(events)
    if not events:
        return Counter()
    pids = {e.patient_id for e in events}
    if len(pids) > 1:
        raise ContractViolation("mine_patient expects events of a single patient")
    ords = np.array([e.date.toordinal() for e in events], dtype=np.int64)
    if np.any(np.diff(ords) < 0):
        raise ContractViolation("events must be sorted by date")
    if len({(e.date, e.code.code) for e in events}) != len(events):
        raise ContractViolation("duplicate (date, code) events; collapse them first")
    if granularity is Granularity.Code17:
        labels = sorted({e.code.code for e in events})
        ident = np.array([labels.index(e.code.code) for e in events], dtype=np.int64)
        names: list = labels
    else:
        names = list(CATEGORIES)
        ident = np.array([names.index(DiagnosticCategory(e.category)) for e in events], dtype=np.int64)
    _, a, b, k = enumerate_pairs(np.zeros(len(events), dtype=np.int64), ords, ident)
    out: Counter = Counter()
    for key, cnt in Counter(zip(a.tolist(), b.tolist(), k.tolist())).items():
        out[(names[key[0]], names[key[1]], BUCKETS[key[2]])] = cnt
    return out


@dataclass(frozen=True)
class Stratum:
    level: str  # national | state | county | race
    key: str = ""

    LEVEL_COLUMNS = {"state": "state", "county": "county_fips", "race": "race"}

    def __post_init__(self):
        if self.level not in ("national", "state", "county", "race"):
            raise ContractViolation(f"unknown stratum level {self.level!r}")
        if self.level != "national" and not self.key:
            raise ContractViolation(f"{self.level} stratum needs a key")

    @property
    def label(self) -> str:
        return "national" if self.level == "national" else f"{self.level}:{self.key}"

    def patient_mask(self, cohort: Cohort) -> np.ndarray:
        if self.level == "national":
            return np.ones(cohort.n_patients, dtype=bool)
        return (cohort.patients[self.LEVEL_COLUMNS[self.level]] == self.key).to_numpy()


NATIONAL = Stratum("national")


def strata_at(cohort: Cohort, level: str) -> list[Stratum]:
    """All strata present in the cohort at ``level``, in sorted key order."""
    level = level.lower()
    if level == "national":
        return [NATIONAL]
    if level not in Stratum.LEVEL_COLUMNS:
        raise ContractViolation(f"unknown stratification level {level!r}")
    keys = sorted(set(cohort.patients[Stratum.LEVEL_COLUMNS[level]]))
    return [Stratum(level, k) for k in keys]


@dataclass(frozen=True)
class PairExposure:
    antecedent: str
    consequent: str
    bucket: LagBucket
    counts: dict


@dataclass
class MinedStratum:
    """Per-patient event counts and pair-bucket counts for one stratum.

    ``pair_counts`` is a patients x (4*C*C) sparse matrix whose column
    ``(bucket * C + antecedent) * C + consequent`` holds that pair's count.
    """

    stratum: Stratum
    granularity: Granularity
    labels: tuple[str, ...]
    patient_ids: np.ndarray
    event_counts: np.ndarray
    pair_counts: sparse.csc_matrix

    @property
    def patient_count(self) -> int:
        return int(self.patient_ids.shape[0])

    @property
    def size(self) -> int:
        return len(self.labels)

    def column(self, antecedent: int, consequent: int, bucket: int) -> int:
        c = self.size
        return (bucket * c + antecedent) * c + consequent

    def pair_vector(self, antecedent: int, consequent: int, bucket: int) -> np.ndarray:
        col = self.pair_counts[:, [self.column(antecedent, consequent, bucket)]]
        return col.toarray().ravel()

    def totals(self) -> np.ndarray:
        """Stratum-wide counts shaped (bucket, antecedent, consequent)."""
        c = self.size
        flat = np.asarray(self.pair_counts.sum(axis=0)).ravel()
        return flat.reshape(N_BUCKETS, c, c)

    def exposures(self) -> Iterator[PairExposure]:
        c = self.size
        m = self.pair_counts
        for col in range(m.shape[1]):
            lo, hi = m.indptr[col], m.indptr[col + 1]
            if lo == hi:
                continue
            b, rest = divmod(col, c * c)
            a, q = divmod(rest, c)
            counts = {self.patient_ids[r]: int(v) for r, v in zip(m.indices[lo:hi], m.data[lo:hi])}
            yield PairExposure(self.labels[a], self.labels[q], BUCKETS[b], counts)


def gather_events(cohort: Cohort, patient_idx: np.ndarray):
    """Event arrays for a subset of patients, with patients renumbered 0..len-1."""
    off = cohort.event_offsets()
    starts = off[patient_idx]
    lengths = off[patient_idx + 1] - starts
    total = int(lengths.sum())
    local = np.repeat(np.arange(len(patient_idx), dtype=np.int64), lengths)
    within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    src = np.repeat(starts, lengths) + within
    return local, cohort.event_day[src], cohort.event_code[src]


def mine_events(
    stratum: Stratum,
    granularity: Granularity,
    codebook: Codebook,
    patient_ids: np.ndarray,
    patient: np.ndarray,
    day: np.ndarray,
    code: np.ndarray,
) -> MinedStratum:
    granularity = Granularity(granularity)
    labels = id_labels(granularity, codebook)
    c = len(labels)
    n_pat = int(patient_ids.shape[0])
    ident = event_ids(code, granularity, codebook)
    event_counts = np.zeros((n_pat, c), dtype=np.int64)
    np.add.at(event_counts, (patient, ident), 1)
    pat, a, b, k = enumerate_pairs(patient, day, ident)
    cols = (k * c + a) * c + b
    pair_counts = sparse.csc_matrix(
        (np.ones(pat.shape[0], dtype=np.int64), (pat, cols)), shape=(n_pat, N_BUCKETS * c * c)
    )
    pair_counts.sum_duplicates()
    return MinedStratum(stratum, granularity, labels, patient_ids, event_counts, pair_counts)


def mine_stratum(cohort: Cohort, stratum: Stratum = NATIONAL,
                 granularity: Granularity = Granularity.Category5) -> MinedStratum:
    idx = np.flatnonzero(stratum.patient_mask(cohort))
    patient, day, code = gather_events(cohort, idx)
    pids = cohort.patients["patient_id"].to_numpy()[idx]
    return mine_events(stratum, granularity, cohort.codebook, pids, patient, day, code)


def merge_mined(parts: Iterable[MinedStratum], stratum: Stratum) -> MinedStratum:
    """Stack minings of disjoint patient sets into one stratum."""
    parts = list(parts)
    if not parts:
        raise ContractViolation("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.granularity is not first.granularity or p.labels != first.labels:
            raise ContractViolation("cannot merge minings of different granularity")
    ids = np.concatenate([p.patient_ids for p in parts])
    if len(set(ids.tolist())) != len(ids):
        raise ContractViolation("merged strata must be disjoint")
    return MinedStratum(
        stratum, first.granularity, first.labels, ids,
        np.vstack([p.event_counts for p in parts]),
        sparse.vstack([p.pair_counts for p in parts], format="csc"),
    )


def write_exposures(path: str | Path, mined: Iterable[MinedStratum]) -> int:
    rows = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "antecedent", "consequent", "bucket", "patient_id", "count"])
        for m in mined:
            for exp in m.exposures():
                for pid in sorted(exp.counts):
                    w.writerow([m.stratum.label, exp.antecedent, exp.consequent, exp.bucket.value, pid,
                                exp.counts[pid]])
                    rows += 1
    return rows


def exposures_frame(mined: MinedStratum) -> pd.DataFrame:
    rows = [
        (mined.stratum.label, e.antecedent, e.consequent, e.bucket.value, pid, cnt)
        for e in mined.exposures() for pid, cnt in e.counts.items()
    ]
    return pd.DataFrame(rows, columns=["stratum", "antecedent", "consequent", "bucket", "patient_id", "count"])
