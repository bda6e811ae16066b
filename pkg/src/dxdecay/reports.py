"""Descriptive code-frequency tables.

Counts are distinct patients: a patient counts once for a code (or a
category) however many hospitalizations carried it. Every percentage is
written next to its numerator and denominator.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pandas as pd

from .codebook import CATEGORIES
from .cohort import Cohort, category_of_codes

CODE_HEADER = ["code", "category", "description", "patients", "denominator", "percent"]
STATE_HEADER = ["state", "category", "patients", "denominator", "percent", "national_patients",
                "national_denominator", "national_percent"]


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


def _presence(n_patients: int, patient: np.ndarray, key: np.ndarray, n_keys: int) -> np.ndarray:
    present = np.zeros((n_patients, n_keys), dtype=bool)
    present[patient, key] = True
    return present


def code_frequencies(cohort: Cohort) -> pd.DataFrame:
    """Distinct patients with at least one event per code, nationally."""
    entries = list(cohort.codebook)
    n = cohort.n_patients
    counts = _presence(n, cohort.event_patient, cohort.event_code, len(entries)).sum(axis=0)
    rows = [(e.code, e.category.value, e.description, int(c), n, _pct(int(c), n)) for e, c in zip(entries, counts)]
    return pd.DataFrame(rows, columns=CODE_HEADER)


def category_state_frequencies(cohort: Cohort) -> pd.DataFrame:
    """Share of each state's patients with at least one event per category,
    alongside the national share for the same category."""
    cat_of = category_of_codes(cohort.codebook)
    n = cohort.n_patients
    present = _presence(n, cohort.event_patient, cat_of[cohort.event_code], len(CATEGORIES))
    national = present.sum(axis=0)
    states = cohort.patients["state"].to_numpy() if n else np.array([], dtype=object)
    rows = []
    for state in sorted(set(states)):
        mask = states == state
        den = int(mask.sum())
        num = present[mask].sum(axis=0)
        for j, cat in enumerate(CATEGORIES):
            rows.append((state, cat.value, int(num[j]), den, _pct(int(num[j]), den),
                         int(national[j]), n, _pct(int(national[j]), n)))
    if not rows:
        for cat in CATEGORIES:
            rows.append(("", cat.value, 0, 0, 0.0, 0, 0, 0.0))
    return pd.DataFrame(rows, columns=STATE_HEADER)


def write_table(path: str | Path, frame: pd.DataFrame) -> int:
    """Write a report frame as CSV; floats use their shortest exact repr."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(frame.columns))
        for row in frame.itertuples(index=False):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return len(frame)
