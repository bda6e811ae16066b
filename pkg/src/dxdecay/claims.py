"""Beneficiary and hospitalization records and their delimited-text loaders.

Both loaders keep the parsed rows in a :class:`pandas.DataFrame` because the
cohort builder works column-wise; iterating a table yields the record
dataclasses for callers that want row objects.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
import pandas as pd

from .errors import InputError

MAX_DX_SLOTS = 25
DEFAULT_WINDOW = (dt.date(2016, 1, 1), dt.date(2018, 12, 31))

STATE_FIPS = {
    "AL": "01", "AK": "02", "AZ": "04", "AR": "05", "CA": "06", "CO": "08", "CT": "09",
    "DE": "10", "DC": "11", "FL": "12", "GA": "13", "HI": "15", "ID": "16", "IL": "17",
    "IN": "18", "IA": "19", "KS": "20", "KY": "21", "LA": "22", "ME": "23", "MD": "24",
    "MA": "25", "MI": "26", "MN": "27", "MS": "28", "MO": "29", "MT": "30", "NE": "31",
    "NV": "32", "NH": "33", "NJ": "34", "NM": "35", "NY": "36", "NC": "37", "ND": "38",
    "OH": "39", "OK": "40", "OR": "41", "PA": "42", "RI": "44", "SC": "45", "SD": "46",
    "TN": "47", "TX": "48", "UT": "49", "VT": "50", "VA": "51", "WA": "53", "WV": "54",
    "WI": "55", "WY": "56", "PR": "72",
}


class Sex(str, enum.Enum):
    Male = "Male"
    Female = "Female"
    Unknown = "Unknown"


class RaceEthnicity(str, enum.Enum):
    Hispanic = "Hispanic"
    NativeAmericanAlaskaNative = "NativeAmericanAlaskaNative"
    NonHispanicAsian = "NonHispanicAsian"
    NonHispanicBlack = "NonHispanicBlack"
    NonHispanicWhite = "NonHispanicWhite"
    Other = "Other"
    Unknown = "Unknown"


class Entitlement(str, enum.Enum):
    Age = "Age"
    Disability = "Disability"
    ESRD = "ESRD"


class AdmissionSource(str, enum.Enum):
    NursingFacility = "NursingFacility"
    Other = "Other"


@dataclass(frozen=True)
class ZipSpell:
    zip: str
    start: dt.date
    end: dt.date | None  # open-ended when None

    def overlaps(self, lo: dt.date, hi: dt.date) -> bool:
        return self.start <= hi and (self.end is None or self.end >= lo)


@dataclass(frozen=True)
class Beneficiary:
    patient_id: str
    birth_year: int
    sex: Sex
    race_ethnicity: RaceEthnicity
    medicaid_eligible: bool
    entitlement_reason: Entitlement
    zip_history: tuple[ZipSpell, ...]


@dataclass(frozen=True)
class HospitalizationRecord:
    patient_id: str
    admission_date: dt.date
    diagnosis_codes: tuple[str, ...]
    admission_source: AdmissionSource
    zip: str
    county_fips: str
    state: str


@dataclass(frozen=True)
class Reject:
    """One problem with one input row; ``row`` is the 1-based data row index."""

    row: int
    column: str
    reason: str


BENEFICIARY_COLUMNS = (
    "patient_id", "birth_year", "sex", "race", "medicaid", "entitlement", "zip", "zip_start", "zip_end",
)
HOSPITALIZATION_COLUMNS = ("patient_id", "admission_date", "admission_source", "zip", "county_fips", "state")
DX_COLUMNS = tuple(f"dx{i}" for i in range(1, MAX_DX_SLOTS + 1))

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}
_ZIP_RE = r"^\d{5}$"
_DX_RE = re.compile(r"^dx(\d+)$")


def _read_frame(path: str | Path, required: Iterable[str], delimiter: str) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, sep=delimiter, dtype=str, keep_default_na=False, na_filter=False, engine="c",
        )
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except pd.errors.EmptyDataError:
        raise InputError(f"{path} is empty; expected a header row") from None
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: header lacks required column(s) {missing}")
    return frame


class _Collector:
    def __init__(self, n_rows: int):
        self.bad = np.zeros(n_rows, dtype=bool)
        self.items: list[Reject] = []

    def flag(self, mask, column: str, reason) -> None:
        mask = np.asarray(mask, dtype=bool)
        for i in np.flatnonzero(mask):
            text = reason(i) if callable(reason) else reason
            self.items.append(Reject(int(i) + 1, column, text))
        self.bad |= mask

    def sorted(self) -> list[Reject]:
        return sorted(self.items, key=lambda r: (r.row, r.column))


def _parse_dates(series: pd.Series) -> pd.Series:
    return pd.to_datetime(series.str.strip(), format="%Y-%m-%d", errors="coerce")


def _check_enum(col: _Collector, series: pd.Series, enum_cls, column: str) -> pd.Series:
    values = series.str.strip()
    allowed = {m.value for m in enum_cls}
    col.flag(~values.isin(allowed).to_numpy(), column,
             lambda i: f"invalid {column} {values.iat[i]!r}; expected one of {sorted(allowed)}")
    return values


@dataclass
class BeneficiaryTable:
    """Loaded beneficiaries plus the rows that failed validation.

    ``frame`` holds one row per patient. Zip spells are kept as tuples in the
    ``zip_history`` column.
    """

    frame: pd.DataFrame
    rejects: list[Reject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[Beneficiary]:
        for row in self.frame.itertuples(index=False):
            yield Beneficiary(
                patient_id=row.patient_id,
                birth_year=int(row.birth_year),
                sex=Sex(row.sex),
                race_ethnicity=RaceEthnicity(row.race),
                medicaid_eligible=bool(row.medicaid),
                entitlement_reason=Entitlement(row.entitlement),
                zip_history=row.zip_history,
            )

    @classmethod
    def from_records(cls, beneficiaries: Iterable[Beneficiary]) -> "BeneficiaryTable":
        rows = []
        seen = set()
        for b in beneficiaries:
            if b.patient_id in seen:
                raise InputError(f"duplicate patient_id {b.patient_id!r}")
            seen.add(b.patient_id)
            rows.append({
                "patient_id": b.patient_id,
                "birth_year": int(b.birth_year),
                "sex": Sex(b.sex).value,
                "race": RaceEthnicity(b.race_ethnicity).value,
                "medicaid": bool(b.medicaid_eligible),
                "entitlement": Entitlement(b.entitlement_reason).value,
                "zip_history": tuple(b.zip_history),
            })
        return cls(_beneficiary_frame(rows))


def _beneficiary_frame(rows) -> pd.DataFrame:
    cols = ["patient_id", "birth_year", "sex", "race", "medicaid", "entitlement", "zip_history"]
    frame = pd.DataFrame(rows, columns=cols)
    frame["birth_year"] = frame["birth_year"].astype(np.int64)
    frame["medicaid"] = frame["medicaid"].astype(bool)
    return frame.reset_index(drop=True)


def _split_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(";")] if text.strip() else []


def _parse_zip_history(zips: str, starts: str, ends: str) -> tuple[tuple[ZipSpell, ...] | None, str]:
    z, s, e = _split_list(zips), _split_list(starts), _split_list(ends)
    if not z:
        return None, "zip history is empty"
    if len(s) != len(z) or (e and len(e) != len(z)):
        return None, "zip, zip_start and zip_end lists differ in length"
    if not e:
        e = [""] * len(z)
    spells = []
    for zip_code, start, end in zip(z, s, e):
        if not re.match(_ZIP_RE, zip_code):
            return None, f"zip {zip_code!r} is not 5 digits"
        try:
            d0 = dt.date.fromisoformat(start)
            d1 = dt.date.fromisoformat(end) if end else None
        except ValueError:
            return None, f"bad zip spell dates {start!r}..{end!r}"
        if d1 is not None and d1 < d0:
            return None, f"zip spell ends before it starts ({start}..{end})"
        spells.append(ZipSpell(zip_code, d0, d1))
    for prev, nxt in zip(spells, spells[1:]):
        if prev.end is None or nxt.start <= prev.end:
            return None, "zip spells overlap or are out of order"
    return tuple(spells), ""


def load_beneficiaries(path: str | Path, delimiter: str = ",") -> BeneficiaryTable:
    """Read the beneficiary file.

    Multiple residence spells are written in one row as ``;``-separated
    lists in ``zip``, ``zip_start`` and ``zip_end``; a blank ``zip_end``
    means the spell is still open. Duplicate ``patient_id`` values are fatal.
    """
    frame = _read_frame(path, BENEFICIARY_COLUMNS, delimiter)
    n = len(frame)
    col = _Collector(n)

    pid = frame["patient_id"].str.strip()
    col.flag((pid == "").to_numpy(), "patient_id", "patient_id is blank")
    dup = pid[(pid != "") & pid.duplicated(keep=False)]
    if len(dup):
        raise InputError(f"{path}: duplicate patient_id {dup.iat[0]!r} (rows "
                         f"{', '.join(str(i + 1) for i in dup.index[:5])})")

    birth = pd.to_numeric(frame["birth_year"].str.strip(), errors="coerce")
    bad_birth = birth.isna() | (birth != birth.round()) | (birth < 1850) | (birth > 2100)
    col.flag(bad_birth.to_numpy(), "birth_year",
             lambda i: f"invalid birth_year {frame['birth_year'].iat[i]!r}")

    sex = _check_enum(col, frame["sex"], Sex, "sex")
    race = _check_enum(col, frame["race"], RaceEthnicity, "race")
    ent = _check_enum(col, frame["entitlement"], Entitlement, "entitlement")

    medicaid_raw = frame["medicaid"].str.strip().str.lower()
    col.flag((~medicaid_raw.isin(_TRUE | _FALSE)).to_numpy(), "medicaid",
             lambda i: f"invalid medicaid flag {frame['medicaid'].iat[i]!r}")

    histories = []
    for i, (z, s, e) in enumerate(zip(frame["zip"], frame["zip_start"], frame["zip_end"])):
        spells, problem = _parse_zip_history(z, s, e)
        if spells is None:
            col.flag(np.arange(n) == i, "zip", problem)
        histories.append(spells)

    good = ~col.bad
    out = pd.DataFrame({
        "patient_id": pid[good].to_numpy(),
        "birth_year": birth[good].to_numpy(),
        "sex": sex[good].to_numpy(),
        "race": race[good].to_numpy(),
        "medicaid": medicaid_raw[good].isin(_TRUE).to_numpy(),
        "entitlement": ent[good].to_numpy(),
        "zip_history": [h for h, g in zip(histories, good) if g],
    })
    return BeneficiaryTable(_beneficiary_frame(out), col.sorted())


@dataclass
class HospitalizationTable:
    """Loaded hospitalizations.

    ``frame`` carries ``patient_id``, ``admission_date`` (datetime64),
    ``admission_source``, ``zip``, ``county_fips``, ``state`` and the
    diagnosis slots ``dx1``..``dx25`` (blank strings where unused).
    """

    frame: pd.DataFrame
    rejects: list[Reject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[HospitalizationRecord]:
        dx = self.frame[list(DX_COLUMNS)].to_numpy()
        for k, row in enumerate(self.frame.itertuples(index=False)):
            yield HospitalizationRecord(
                patient_id=row.patient_id,
                admission_date=row.admission_date.date(),
                diagnosis_codes=tuple(c for c in dx[k] if c),
                admission_source=AdmissionSource(row.admission_source),
                zip=row.zip,
                county_fips=row.county_fips,
                state=row.state,
            )

    @classmethod
    def from_records(cls, records: Iterable[HospitalizationRecord]) -> "HospitalizationTable":
        rows = []
        for r in records:
            codes = list(r.diagnosis_codes)
            if not 1 <= len(codes) <= MAX_DX_SLOTS:
                raise InputError(f"record for {r.patient_id!r} has {len(codes)} diagnosis codes")
            row = {
                "patient_id": r.patient_id,
                "admission_date": pd.Timestamp(r.admission_date),
                "admission_source": AdmissionSource(r.admission_source).value,
                "zip": r.zip,
                "county_fips": r.county_fips,
                "state": r.state,
            }
            row.update({c: (codes[i] if i < len(codes) else "") for i, c in enumerate(DX_COLUMNS)})
            rows.append(row)
        frame = pd.DataFrame(rows, columns=list(HOSPITALIZATION_COLUMNS) + list(DX_COLUMNS))
        frame["admission_date"] = pd.to_datetime(frame["admission_date"])
        return cls(frame)


def load_hospitalizations(
    path: str | Path,
    window: tuple[dt.date, dt.date] | None = DEFAULT_WINDOW,
    delimiter: str = ",",
) -> HospitalizationTable:
    """Read the hospitalization file.

    Diagnosis slots keep claim order with blank slots squeezed out. A row
    that uses more than 25 slots, carries no code at all, or falls outside
    ``window`` is rejected rather than truncated or clipped.
    """
    frame = _read_frame(path, HOSPITALIZATION_COLUMNS + ("dx1",), delimiter)
    n = len(frame)
    col = _Collector(n)

    dx_cols = sorted((c for c in frame.columns if _DX_RE.match(c)), key=lambda c: int(c[2:]))
    extra = [c for c in dx_cols if int(c[2:]) > MAX_DX_SLOTS]
    allowed = [c for c in dx_cols if int(c[2:]) <= MAX_DX_SLOTS]
    dx = frame[dx_cols].apply(lambda s: s.str.strip()).to_numpy(dtype=object) if dx_cols else np.empty((n, 0))
    filled = dx != ""
    if extra:
        over = filled[:, len(allowed):].any(axis=1)
        col.flag(over, "dx26", lambda i: f"too many diagnosis slots ({int(filled[i].sum())} codes, max 25)")
    col.flag(~filled.any(axis=1), "dx1", "no diagnosis codes")

    pid = frame["patient_id"].str.strip()
    col.flag((pid == "").to_numpy(), "patient_id", "patient_id is blank")

    dates = _parse_dates(frame["admission_date"])
    bad_date = dates.isna().to_numpy()
    col.flag(bad_date, "admission_date", lambda i: f"invalid date {frame['admission_date'].iat[i]!r}")
    if window is not None:
        lo, hi = pd.Timestamp(window[0]), pd.Timestamp(window[1])
        outside = (~bad_date) & ((dates < lo) | (dates > hi)).to_numpy()
        col.flag(outside, "admission_date",
                 lambda i: f"date {frame['admission_date'].iat[i].strip()} outside study window "
                           f"{window[0]}..{window[1]}")

    source = _check_enum(col, frame["admission_source"], AdmissionSource, "admission_source")
    zips = frame["zip"].str.strip()
    col.flag((~zips.str.match(_ZIP_RE)).to_numpy(), "zip", lambda i: f"zip {zips.iat[i]!r} is not 5 digits")
    fips = frame["county_fips"].str.strip()
    bad_fips = (~fips.str.match(_ZIP_RE)).to_numpy()
    col.flag(bad_fips, "county_fips", lambda i: f"county_fips {fips.iat[i]!r} is not 5 digits")
    state = frame["state"].str.strip().str.upper()
    known = state.isin(STATE_FIPS.keys()).to_numpy()
    col.flag(~known, "state", lambda i: f"unknown state {state.iat[i]!r}")
    prefix_ok = fips.str[:2].to_numpy() == state.map(STATE_FIPS).fillna("").to_numpy()
    col.flag(known & ~bad_fips & ~prefix_ok, "county_fips",
             lambda i: f"county_fips {fips.iat[i]} does not belong to state {state.iat[i]}")

    good = ~col.bad
    out = pd.DataFrame({
        "patient_id": pid[good].to_numpy(),
        "admission_date": dates[good].to_numpy(),
        "admission_source": source[good].to_numpy(),
        "zip": zips[good].to_numpy(),
        "county_fips": fips[good].to_numpy(),
        "state": state[good].to_numpy(),
    })
    kept = dx[good][:, : len(allowed)]
    squeezed = _squeeze_slots(kept)
    for j, name in enumerate(DX_COLUMNS):
        out[name] = squeezed[:, j] if j < squeezed.shape[1] else ""
    return HospitalizationTable(out, col.sorted())


def _squeeze_slots(dx: np.ndarray) -> np.ndarray:
    """Left-pack non-blank codes, preserving their order."""
    n, k = dx.shape
    out = np.full((n, MAX_DX_SLOTS), "", dtype=object)
    if n == 0 or k == 0:
        return out
    filled = dx != ""
    if filled.all() or not (filled[:, 1:] & ~filled[:, :-1]).any():
        out[:, :k] = dx
        return out
    pos = np.cumsum(filled, axis=1) - 1
    rows, cols = np.nonzero(filled)
    out[rows, pos[rows, cols]] = dx[rows, cols]
    return out


def write_rejects(path: str | Path, rejects: Iterable[Reject], source: str = "") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "row", "column", "reason"])
        for r in rejects:
            w.writerow([source, r.row, r.column, r.reason])
