"""Cohort filters and the analytic event stream."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
import pandas as pd

from .claims import (
    DEFAULT_WINDOW, DX_COLUMNS, AdmissionSource, BeneficiaryTable, HospitalizationTable, RaceEthnicity, Sex,
)
from .codebook import CATEGORIES, DEFAULT_CODEBOOK, Codebook, DementiaCode, DiagnosticCategory
from .errors import InputError

EPOCH = np.datetime64("1970-01-01", "D")
AGE_BANDS = ("65-69", "70-74", "75-79", "80-84", "85-89", "90-94", "95+")


@dataclass(frozen=True)
class CodedEvent:
    patient_id: str
    date: dt.date
    code: DementiaCode
    category: DiagnosticCategory
    county_fips: str
    state: str


@dataclass
class Cohort:
    """Retained patients and their coded events, stored column-wise.

    ``patients`` is sorted by ``patient_id`` and carries the stratum labels
    (``state``, ``county_fips``, ``race``) taken from each patient's earliest
    retained hospitalization. Event arrays are aligned and sorted by
    (patient, day, code): ``event_patient`` indexes ``patients``,
    ``event_day`` counts days since 1970-01-01 and ``event_code`` indexes the
    codebook. ``event_record``/``event_slot`` point back to the claim slot
    that produced each event.
    """

    patients: pd.DataFrame
    event_patient: np.ndarray
    event_day: np.ndarray
    event_code: np.ndarray
    event_record: np.ndarray
    event_slot: np.ndarray
    records: pd.DataFrame
    window: tuple[dt.date, dt.date]
    codebook: Codebook = field(default_factory=lambda: DEFAULT_CODEBOOK)
    stats: dict = field(default_factory=dict)

    @property
    def n_patients(self) -> int:
        return len(self.patients)

    @property
    def n_events(self) -> int:
        return int(self.event_code.shape[0])

    @property
    def n_hospitalizations(self) -> int:
        return len(self.records)

    def events(self) -> Iterator[CodedEvent]:
        pids = self.patients["patient_id"].to_numpy()
        county = self.records["county_fips"].to_numpy()
        state = self.records["state"].to_numpy()
        entries = list(self.codebook)
        for p, d, c, r in zip(self.event_patient, self.event_day, self.event_code, self.event_record):
            entry = entries[c]
            yield CodedEvent(
                patient_id=pids[p],
                date=(EPOCH + np.timedelta64(int(d), "D")).astype(dt.date),
                code=entry,
                category=entry.category,
                county_fips=county[r],
                state=state[r],
            )

    def event_offsets(self) -> np.ndarray:
        """Boundaries of each patient's event run: events of patient i are [off[i], off[i+1])."""
        counts = np.bincount(self.event_patient, minlength=self.n_patients)
        return np.concatenate(([0], np.cumsum(counts)))


def _zip_stable(history, lo: dt.date, hi: dt.date) -> bool:
    zips = {spell.zip for spell in history if spell.overlaps(lo, hi)}
    return len(zips) == 1


def build_cohort(
    beneficiaries: BeneficiaryTable,
    records: HospitalizationTable,
    window: tuple[dt.date, dt.date] = DEFAULT_WINDOW,
    min_age: int = 65,
    codebook: Codebook | None = None,
) -> Cohort:
    """Apply the inclusion rules and emit one event per (patient, date, code).

    Records are kept when they fall in ``window``, did not come from a
    nursing facility, carry at least one qualifying code, belong to a known
    beneficiary living at a single zip throughout the window, and the patient
    was at least ``min_age`` (admission year minus birth year) at admission.
    The age rule is applied per record, so a patient's first retained
    admission is always at or above ``min_age``.
    """
    codebook = codebook or DEFAULT_CODEBOOK
    lo, hi = window
    if hi < lo:
        raise InputError(f"study window ends before it starts: {lo}..{hi}")
    stats: dict = {"input_beneficiaries": len(beneficiaries), "input_records": len(records)}

    bene = beneficiaries.frame
    stable = np.fromiter((_zip_stable(h, lo, hi) for h in bene["zip_history"]), dtype=bool, count=len(bene))
    stats["zip_unstable_patients"] = int((~stable).sum())
    bene = bene[stable]

    rec = records.frame.reset_index(drop=True)
    rec = rec.assign(record_row=np.arange(len(rec)))
    in_window = (rec["admission_date"] >= pd.Timestamp(lo)) & (rec["admission_date"] <= pd.Timestamp(hi))
    not_nf = rec["admission_source"] != AdmissionSource.NursingFacility.value
    stats["records_outside_window"] = int((~in_window).sum())
    stats["records_nursing_facility"] = int((in_window & ~not_nf).sum())
    rec = rec[in_window & not_nf]

    # long form of qualifying codes: (record position, slot, code index)
    code_index = {code: i for i, code in enumerate(codebook.codes)}
    dx = rec[list(DX_COLUMNS)].to_numpy(dtype=object)
    r_idx, s_idx = np.nonzero(dx != "")
    raw = pd.Series(dx[r_idx, s_idx], dtype=object)
    norm = raw.str.strip().str.upper().str.replace(".", "", n=1, regex=False)
    cidx = norm.map(code_index).to_numpy()
    hit = ~pd.isna(cidx)
    r_idx, s_idx, cidx = r_idx[hit], s_idx[hit], cidx[hit].astype(np.int64)
    qualifying = np.zeros(len(rec), dtype=bool)
    qualifying[r_idx] = True
    stats["records_without_qualifying_code"] = int((~qualifying).sum())

    known = rec["patient_id"].isin(bene["patient_id"]).to_numpy()
    stats["records_unknown_or_excluded_patient"] = int((qualifying & ~known).sum())
    birth = rec["patient_id"].map(bene.set_index("patient_id")["birth_year"]).to_numpy()
    age = rec["admission_date"].dt.year.to_numpy() - np.where(known, birth, 0)
    old_enough = known & (age >= min_age)
    stats["records_under_min_age"] = int((qualifying & known & ~old_enough).sum())
    keep = qualifying & old_enough

    pos_map = np.full(len(rec), -1, dtype=np.int64)
    pos_map[keep] = np.arange(int(keep.sum()))
    rec = rec[keep].reset_index(drop=True)
    rec["age"] = age[keep].astype(np.int64)
    sel = keep[r_idx]
    r_idx, s_idx, cidx = pos_map[r_idx[sel]], s_idx[sel], cidx[sel]

    _check_zip_county(rec)

    patients = _patient_table(bene, rec)
    pid_index = pd.Index(patients["patient_id"])
    rec_patient = pid_index.get_indexer(rec["patient_id"]).astype(np.int64)
    rec_day = (rec["admission_date"].to_numpy().astype("datetime64[D]") - EPOCH).astype(np.int64)

    ev_patient = rec_patient[r_idx]
    ev_day = rec_day[r_idx]
    rec_order = rec["record_row"].to_numpy()[r_idx]
    order = np.lexsort((s_idx, rec_order, cidx, ev_day, ev_patient))
    ev_patient, ev_day, ev_code = ev_patient[order], ev_day[order], cidx[order]
    ev_rec, ev_slot = r_idx[order], s_idx[order]
    if len(order):
        first = np.ones(len(order), dtype=bool)
        first[1:] = (
            (ev_patient[1:] != ev_patient[:-1]) | (ev_day[1:] != ev_day[:-1]) | (ev_code[1:] != ev_code[:-1])
        )
        ev_patient, ev_day, ev_code = ev_patient[first], ev_day[first], ev_code[first]
        ev_rec, ev_slot = ev_rec[first], ev_slot[first]
        stats["collapsed_duplicate_codes"] = int((~first).sum())
    else:
        stats["collapsed_duplicate_codes"] = 0

    stats.update(patients=len(patients), hospitalizations=len(rec), events=int(len(ev_code)))
    return Cohort(
        patients=patients,
        event_patient=ev_patient.astype(np.int64),
        event_day=ev_day.astype(np.int64),
        event_code=ev_code.astype(np.int64),
        event_record=ev_rec.astype(np.int64),
        event_slot=ev_slot.astype(np.int64),
        records=rec,
        window=(lo, hi),
        codebook=codebook,
        stats=stats,
    )


def _check_zip_county(rec: pd.DataFrame) -> None:
    pairs = rec[["zip", "county_fips"]].drop_duplicates()
    clash = pairs["zip"].duplicated(keep=False)
    if clash.any():
        bad = pairs[clash].sort_values(["zip", "county_fips"])
        z = bad["zip"].iat[0]
        counties = sorted(bad.loc[bad["zip"] == z, "county_fips"])
        raise InputError(f"zip {z} maps to several counties {counties}; zip/county mapping is inconsistent")


def _patient_table(bene: pd.DataFrame, rec: pd.DataFrame) -> pd.DataFrame:
    ordered = rec.sort_values(["patient_id", "admission_date", "record_row"], kind="mergesort")
    first = ordered.drop_duplicates("patient_id", keep="first").set_index("patient_id")
    n_hosp = rec.groupby("patient_id").size()
    patients = bene[bene["patient_id"].isin(first.index)].sort_values("patient_id", kind="mergesort")
    patients = patients.reset_index(drop=True)
    ids = patients["patient_id"]
    patients["state"] = ids.map(first["state"]).to_numpy()
    patients["county_fips"] = ids.map(first["county_fips"]).to_numpy()
    patients["age_first"] = ids.map(first["age"]).to_numpy().astype(np.int64)
    patients["first_admission"] = ids.map(first["admission_date"]).to_numpy()
    patients["n_hospitalizations"] = ids.map(n_hosp).to_numpy().astype(np.int64)
    return patients


def age_band(age: int) -> str:
    if age >= 95:
        return "95+"
    if age < 65:
        return "<65"
    lo = 65 + 5 * ((age - 65) // 5)
    return f"{lo}-{lo + 4}"


def demographic_summary(cohort: Cohort) -> pd.DataFrame:
    """Counts and percentages by sex, age band, race and Medicaid status.

    Each row carries its numerator and denominator; the first two rows hold
    the patient and hospitalization totals.
    """
    p = cohort.patients
    n = len(p)
    rows = [
        ("cohort", "patients", n, n),
        ("cohort", "hospitalizations", cohort.n_hospitalizations, cohort.n_hospitalizations),
    ]

    def tabulate(section, values, levels):
        counts = pd.Series(values).value_counts()
        for level in levels:
            rows.append((section, level, int(counts.get(level, 0)), n))

    tabulate("sex", p["sex"], [s.value for s in Sex])
    bands = list(AGE_BANDS)
    ages = [age_band(int(a)) for a in p["age_first"]]
    if "<65" in ages:
        bands = ["<65"] + bands
    tabulate("age", ages, bands)
    tabulate("race", p["race"], [r.value for r in RaceEthnicity])
    tabulate("medicaid", np.where(p["medicaid"].to_numpy(dtype=bool), "Eligible", "Ineligible"),
             ["Ineligible", "Eligible"])
    out = pd.DataFrame(rows, columns=["section", "level", "count", "denominator"])
    out["percent"] = np.where(out["denominator"] > 0, 100.0 * out["count"] / out["denominator"].clip(lower=1), 0.0)
    return out


def category_of_codes(codebook: Codebook) -> np.ndarray:
    return np.asarray(codebook.category_index(), dtype=np.int64)


__all__ = [
    "AGE_BANDS", "CATEGORIES", "CodedEvent", "Cohort", "build_cohort", "demographic_summary", "age_band",
]
