"""Synthetic beneficiaries, hospitalizations and county covariates with
planted coding-practice parameters.

Each county draws from its own generator seeded by ``(seed, fips)``, so a
county's output does not depend on which other counties are in the scenario
or on how many worker processes build them.
"""

from __future__ import annotations

import copy
import datetime as dt
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml

from .claims import DX_COLUMNS, MAX_DX_SLOTS, STATE_FIPS, BeneficiaryTable, HospitalizationTable, RaceEthnicity
from .codebook import CATEGORIES, DEFAULT_CODEBOOK, DiagnosticCategory
from .errors import InputError
from .regression import PREDICTORS
from .tspm import BUCKETS

PROB_TOL = 1e-9
MAX_VISITS = 40
# inclusive day ranges drawn for a revisit gap in each lag bucket
GAP_RANGES = ((0, 0), (1, 30), (31, 90), (91, 365))
AGE_RANGES = {"65-69": (65, 69), "70-74": (70, 74), "75-79": (75, 79), "80-84": (80, 84),
              "85-89": (85, 89), "90-94": (90, 94), "95+": (95, 104)}
FILLER_CODES = ("I10", "E119", "N179", "J189", "I5023", "E785", "N390", "I4891", "E871", "D649",
                "J449", "K219", "F329", "R4182", "Z7901", "E039", "M810", "I2510", "A419", "R296")
NON_SPECIFIC = DiagnosticCategory.NonSpecificDementia
STATES_10 = ("AL", "CA", "FL", "IL", "MT", "NY", "OH", "SD", "TX", "UT")

# outcome coefficients planted by the regression-recovery scenario
PLANTED_COEFFICIENTS = {
    "pct_less_hs": -0.13,
    "unemployment": 0.24,
    "pct_rural": -0.19,
    "pct_medicaid_dementia": -0.07,
    "pct_disability_dementia": 0.32,
    "pct_dementia": 1.27,
    "pct_black_dementia": -0.13,
    "pct_hispanic_dementia": -0.16,
    "pct_asian_dementia": 0.27,
}

COVARIATE_RANGES = {
    "pct_less_hs": (0.05, 0.30),
    "unemployment": (0.02, 0.10),
    "pct_rural": (0.0, 1.0),
    "pct_medicaid_dementia": (0.10, 0.60),
    "pct_disability_dementia": (0.05, 0.35),
    "pct_dementia": (0.005, 0.05),
    "pct_black_dementia": (0.0, 0.40),
    "pct_hispanic_dementia": (0.0, 0.30),
    "pct_asian_dementia": (0.0, 0.10),
}


def _normalized(d: dict) -> dict:
    total = sum(d.values())
    return {k: v / total for k, v in d.items()}


def baseline_profile() -> dict:
    """National baseline coding profile with a Medicare-like demographic mix."""
    return {
        "sex_mix": _normalized({"Female": 0.604, "Male": 0.395, "Unknown": 0.001}),
        "age_mix": _normalized({"65-69": 0.052, "70-74": 0.091, "75-79": 0.145, "80-84": 0.206,
                                "85-89": 0.246, "90-94": 0.189, "95+": 0.072}),
        "race_mix": _normalized({
            "Hispanic": 0.058, "NativeAmericanAlaskaNative": 0.005, "NonHispanicAsian": 0.022,
            "NonHispanicBlack": 0.107, "NonHispanicWhite": 0.798, "Other": 0.006, "Unknown": 0.006,
        }),
        "medicaid": 0.327,
        "disability": 0.15,
        "esrd": 0.01,
        "category_mix": {"AlzheimersDisease": 0.35, "VascularDementia": 0.08, "NonSpecificDementia": 0.50,
                         "PicksDisease": 0.01, "NeurocognitiveDisorder": 0.06},
        "code_mix": {
            "AlzheimersDisease": {"G300": 0.05, "G301": 0.25, "G308": 0.10, "G309": 0.60},
            "VascularDementia": {"F0150": 0.8, "F0151": 0.2},
            "NonSpecificDementia": {"F0280": 0.10, "F0281": 0.05, "F0390": 0.60, "F0391": 0.10,
                                    "G3109": 0.02, "G311": 0.03, "G3189": 0.05, "G319": 0.05},
            "PicksDisease": {"G3101": 1.0},
            "NeurocognitiveDisorder": {"G3183": 0.8, "G3185": 0.2},
        },
        "decay": 0.15,
        "gap_mix": {"Cooccurrence": 0.05, "WithinOneMonth": 0.25, "OneToThreeMonths": 0.25,
                    "OverThreeMonths": 0.45},
        "extra_visits_mean": 1.5,
        "cocode": 0.2,
        "filler_mean": 2.0,
        "nursing_facility": 0.05,
        "movers": 0.0,
    }


_VECTOR_KEYS = {
    "sex_mix": ("Female", "Male", "Unknown"),
    "age_mix": tuple(AGE_RANGES),
    "race_mix": tuple(r.value for r in RaceEthnicity),
    "category_mix": tuple(c.value for c in CATEGORIES),
    "gap_mix": tuple(b.value for b in BUCKETS),
}
_UNIT_KEYS = ("medicaid", "disability", "esrd", "decay", "cocode", "nursing_facility", "movers")


def _check_vector(name: str, vec: Any, allowed) -> None:
    if not isinstance(vec, dict) or not vec:
        raise InputError(f"{name} must be a non-empty mapping")
    unknown = set(vec) - set(allowed)
    if unknown:
        raise InputError(f"{name} has unknown keys {sorted(unknown)}")
    values = [float(v) for v in vec.values()]
    if any(v < 0 or math.isnan(v) for v in values):
        raise InputError(f"{name} has negative or NaN probabilities")
    if abs(sum(values) - 1.0) > PROB_TOL:
        raise InputError(f"{name} sums to {sum(values)!r}, not 1")


def validate_profile(p: dict, where: str = "profile") -> None:
    for key, allowed in _VECTOR_KEYS.items():
        _check_vector(f"{where}.{key}", p[key], allowed)
    for cat, mix in p["code_mix"].items():
        try:
            category = DiagnosticCategory(cat)
        except ValueError:
            raise InputError(f"{where}.code_mix has unknown category {cat!r}") from None
        _check_vector(f"{where}.code_mix.{cat}", mix, DEFAULT_CODEBOOK.codes_in(category))
    for cat, prob in p["category_mix"].items():
        if prob > 0 and cat not in p["code_mix"]:
            raise InputError(f"{where}.code_mix lacks category {cat}")
    for key in _UNIT_KEYS:
        v = float(p[key])
        if not 0.0 <= v <= 1.0:
            raise InputError(f"{where}.{key} = {v} is outside [0, 1]")
    if p["disability"] + p["esrd"] > 1.0:
        raise InputError(f"{where}: disability + esrd exceeds 1")
    for key in ("extra_visits_mean", "filler_mean"):
        if float(p[key]) < 0:
            raise InputError(f"{where}.{key} must be >= 0")


def _merge(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (overrides or {}).items():
        if k not in out:
            raise InputError(f"unknown profile key {k!r}")
        out[k] = copy.deepcopy(v)
    return out


def divergence(profile: dict, base: dict) -> float:
    """Parameter distance of a county profile from the baseline.

    Sum of absolute differences of the scalar coding parameters plus the
    total-variation distance of each probability vector.
    """
    d = 0.0
    for k in ("decay", "cocode", "extra_visits_mean"):
        d += abs(float(profile[k]) - float(base[k]))

    def tv(a, b):
        keys = set(a) | set(b)
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)

    d += tv(profile["category_mix"], base["category_mix"])
    d += tv(profile["gap_mix"], base["gap_mix"])
    for cat in set(profile["code_mix"]) | set(base["code_mix"]):
        d += tv(profile["code_mix"].get(cat, {}), base["code_mix"].get(cat, {}))
    return d


def county_zip(fips: str) -> str:
    # 7 is invertible mod 1e5, so distinct counties never share a zip
    return f"{(7 * int(fips) + 3) % 100000:05d}"


def mover_zip(fips: str) -> str:
    return f"{(7 * int(fips) + 4) % 100000:05d}"


@dataclass
class PlantedTruth:
    scenario: str
    seed: int
    divergence: dict[str, float]
    coefficients: dict[str, float] = field(default_factory=dict)
    intercept: float | None = None
    state_effects: dict[str, float] = field(default_factory=dict)
    noise_sd: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PlantedTruth":
        return cls(**json.loads(text))


@dataclass
class SyntheticData:
    beneficiaries: pd.DataFrame
    hospitalizations: pd.DataFrame
    covariates: pd.DataFrame
    truth: PlantedTruth
    scores: pd.DataFrame | None = None
    window: tuple[dt.date, dt.date] = (dt.date(2016, 1, 1), dt.date(2018, 12, 31))

    def beneficiary_table(self) -> BeneficiaryTable:
        from .claims import ZipSpell

        b = self.beneficiaries

        def spells(z, s, e):
            zs, ss, es = z.split(";"), s.split(";"), e.split(";")
            return tuple(ZipSpell(a, dt.date.fromisoformat(c), dt.date.fromisoformat(d) if d else None)
                         for a, c, d in zip(zs, ss, es))

        frame = pd.DataFrame({
            "patient_id": b["patient_id"].to_numpy(),
            "birth_year": b["birth_year"].astype(np.int64).to_numpy(),
            "sex": b["sex"].to_numpy(),
            "race": b["race"].to_numpy(),
            "medicaid": (b["medicaid"] == "1").to_numpy(),
            "entitlement": b["entitlement"].to_numpy(),
            "zip_history": [spells(z, s, e) for z, s, e in zip(b["zip"], b["zip_start"], b["zip_end"])],
        })
        return BeneficiaryTable(frame)

    def hospitalization_table(self) -> HospitalizationTable:
        h = self.hospitalizations.copy()
        h["admission_date"] = pd.to_datetime(h["admission_date"], format="%Y-%m-%d")
        return HospitalizationTable(h)

    def write(self, outdir: str | Path) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "beneficiaries": outdir / "beneficiaries.csv",
            "hospitalizations": outdir / "hospitalizations.csv",
            "covariates": outdir / "covariates.csv",
            "truth": outdir / "truth.json",
        }
        self.beneficiaries.to_csv(paths["beneficiaries"], index=False, lineterminator="\n")
        self.hospitalizations.to_csv(paths["hospitalizations"], index=False, lineterminator="\n")
        _float_frame(self.covariates).to_csv(paths["covariates"], index=False, lineterminator="\n")
        paths["truth"].write_text(self.truth.to_json(), encoding="utf-8")
        if self.scores is not None:
            paths["scores"] = outdir / "planted_scores.csv"
            _float_frame(self.scores).to_csv(paths["scores"], index=False, lineterminator="\n")
        return paths


def _float_frame(frame: pd.DataFrame) -> pd.DataFrame:
    out = frame.copy()
    for c in out.columns:
        if out[c].dtype.kind == "f":
            out[c] = [repr(float(x)) for x in out[c]]
    return out


def _choice(rng: np.random.Generator, labels, probs: dict, size: int) -> np.ndarray:
    p = np.array([float(probs.get(k, 0.0)) for k in labels])
    return rng.choice(len(labels), size=size, p=p / p.sum())


def _generate_county(task) -> tuple[pd.DataFrame, pd.DataFrame]:
    county, profile, seed, window = task
    fips, state = county["fips"], county["state"]
    n = int(county["n_patients"])
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(fips)]))
    lo, hi = window
    lo_ord, hi_ord = lo.toordinal(), hi.toordinal()

    # demographics
    sexes = np.array(_VECTOR_KEYS["sex_mix"])[_choice(rng, _VECTOR_KEYS["sex_mix"], profile["sex_mix"], n)]
    races = np.array(_VECTOR_KEYS["race_mix"])[_choice(rng, _VECTOR_KEYS["race_mix"], profile["race_mix"], n)]
    bands = _choice(rng, _VECTOR_KEYS["age_mix"], profile["age_mix"], n)
    band_lo = np.array([AGE_RANGES[b][0] for b in _VECTOR_KEYS["age_mix"]])[bands]
    band_hi = np.array([AGE_RANGES[b][1] for b in _VECTOR_KEYS["age_mix"]])[bands]
    ages = rng.integers(band_lo, band_hi + 1)
    medicaid = rng.random(n) < profile["medicaid"]
    u = rng.random(n)
    entitlement = np.where(u < profile["disability"], "Disability",
                           np.where(u < profile["disability"] + profile["esrd"], "ESRD", "Age"))
    movers = rng.random(n) < profile["movers"]

    # visit schedule
    first_day = rng.integers(lo_ord, hi_ord + 1, size=n)
    n_visits = 1 + np.minimum(rng.poisson(profile["extra_visits_mean"], size=n), MAX_VISITS - 1)
    gap_bucket = _choice(rng, _VECTOR_KEYS["gap_mix"], profile["gap_mix"], n * (MAX_VISITS - 1))
    gap_bucket = gap_bucket.reshape(n, MAX_VISITS - 1)
    g_lo = np.array([r[0] for r in GAP_RANGES])[gap_bucket]
    g_hi = np.array([r[1] for r in GAP_RANGES])[gap_bucket]
    gaps = rng.integers(g_lo, g_hi + 1)
    days = first_day[:, None] + np.concatenate((np.zeros((n, 1), dtype=np.int64), np.cumsum(gaps, axis=1)), axis=1)
    valid = (np.arange(MAX_VISITS)[None, :] < n_visits[:, None]) & (days <= hi_ord)

    # dementia codes: first from the mix, later ones carried forward or downgraded
    codes = DEFAULT_CODEBOOK.codes
    cats = [c.value for c in CATEGORIES]
    cat_first = _choice(rng, cats, profile["category_mix"], n)
    code_first = np.empty(n, dtype=np.int64)
    for ci, cat in enumerate(cats):
        sel = np.flatnonzero(cat_first == ci)
        if sel.size == 0:
            continue
        mix = profile["code_mix"][cat]
        local = list(mix)
        pick = _choice(rng, local, mix, sel.size)
        code_first[sel] = np.array([codes.index(c) for c in local])[pick]
    ns_codes = np.array([codes.index(c) for c in DEFAULT_CODEBOOK.codes_in(NON_SPECIFIC)])
    dx = np.empty((n, MAX_VISITS), dtype=np.int64)
    dx[:, 0] = code_first
    downgrade = rng.random((n, MAX_VISITS)) < profile["decay"]
    substitute = ns_codes[rng.integers(0, len(ns_codes), size=(n, MAX_VISITS))]
    for v in range(1, MAX_VISITS):
        dx[:, v] = np.where(downgrade[:, v], substitute[:, v], dx[:, v - 1])
    cocode = (rng.random((n, MAX_VISITS)) < profile["cocode"])
    second = ns_codes[rng.integers(0, len(ns_codes), size=(n, MAX_VISITS))]
    cocode &= second != dx
    n_filler = np.minimum(rng.poisson(profile["filler_mean"], size=(n, MAX_VISITS)), MAX_DX_SLOTS - 2)
    filler = rng.integers(0, len(FILLER_CODES), size=(n, MAX_VISITS, MAX_DX_SLOTS))
    position = rng.integers(0, n_filler + 1)
    nursing = rng.random((n, MAX_VISITS)) < profile["nursing_facility"]

    pid = np.array([f"P{fips}{i:06d}" for i in range(n)])
    zip_code = county_zip(fips)
    p_idx, v_idx = np.nonzero(valid)  # row-major: patient, then visit order
    rows = len(p_idx)
    code_arr = np.array(codes + FILLER_CODES + ("",), dtype=object)
    blank = len(code_arr) - 1
    prim = dx[p_idx, v_idx]
    sec = np.where(cocode[p_idx, v_idx], second[p_idx, v_idx], -1)
    has_sec = (sec >= 0).astype(np.int64)
    pos = position[p_idx, v_idx]
    nf = n_filler[p_idx, v_idx]
    fill = filler[p_idx, v_idx] + len(codes)
    slots = np.full((rows, MAX_DX_SLOTS), blank, dtype=np.int64)
    for s in range(MAX_DX_SLOTS):
        fi = np.where(s < pos, s, s - 1 - has_sec)
        from_filler = ((s < pos) | (s > pos + has_sec)) & (fi < nf) & (fi >= 0)
        col = np.where(from_filler, fill[np.arange(rows), np.clip(fi, 0, MAX_DX_SLOTS - 1)], blank)
        col = np.where(s == pos, prim, col)
        col = np.where((has_sec == 1) & (s == pos + 1), sec, col)
        slots[:, s] = col

    hosp = pd.DataFrame({
        "patient_id": pid[p_idx],
        "admission_date": [dt.date.fromordinal(int(d)).isoformat() for d in days[p_idx, v_idx]],
        "admission_source": np.where(nursing[p_idx, v_idx], "NursingFacility", "Other"),
        "zip": zip_code,
        "county_fips": fips,
        "state": state,
    })
    dx_frame = pd.DataFrame(code_arr[slots], columns=list(DX_COLUMNS))
    hosp = pd.concat([hosp, dx_frame], axis=1)

    first_year = np.array([dt.date.fromordinal(int(d)).year for d in first_day])
    zips = np.where(movers, f"{zip_code};{mover_zip(fips)}", zip_code)
    mid = dt.date.fromordinal((lo_ord + hi_ord) // 2)
    zip_start = np.where(movers, f"{lo.isoformat()};{(mid + dt.timedelta(days=1)).isoformat()}", lo.isoformat())
    zip_end = np.where(movers, f"{mid.isoformat()};", "")
    bene = pd.DataFrame({
        "patient_id": pid,
        "birth_year": first_year - ages,
        "sex": sexes,
        "race": races,
        "medicaid": np.where(medicaid, "1", "0"),
        "entitlement": entitlement,
        "zip": zips,
        "zip_start": zip_start,
        "zip_end": zip_end,
    })
    return bene, hosp


def load_scenario(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: scenario must be a mapping")
    return data


def _parse_window(cfg: dict) -> tuple[dt.date, dt.date]:
    w = cfg.get("window", ["2016-01-01", "2018-12-31"])
    try:
        lo, hi = (d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in w)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad scenario window {w!r}: {exc}") from None
    if hi < lo:
        raise InputError(f"scenario window ends before it starts: {lo}..{hi}")
    return lo, hi


def _county_covariates(counties, seed: int) -> pd.DataFrame:
    rows = []
    for county in counties:
        given = county.get("covariates") or {}
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(county["fips"]), 1]))
        row = {"county_fips": county["fips"], "state": county["state"]}
        for name in PREDICTORS:
            lo, hi = COVARIATE_RANGES[name]
            draw = float(rng.uniform(lo, hi))
            row[name] = float(given.get(name, draw))
        rows.append(row)
    return pd.DataFrame(rows, columns=["county_fips", "state", *PREDICTORS])


_OBSERVED_SHARES = ("pct_medicaid_dementia", "pct_disability_dementia", "pct_black_dementia",
                    "pct_hispanic_dementia", "pct_asian_dementia")


def _observed_shares(bene: pd.DataFrame) -> dict[str, float]:
    n = max(len(bene), 1)
    return {
        "pct_medicaid_dementia": float((bene["medicaid"] == "1").sum()) / n,
        "pct_disability_dementia": float((bene["entitlement"] == "Disability").sum()) / n,
        "pct_black_dementia": float((bene["race"] == "NonHispanicBlack").sum()) / n,
        "pct_hispanic_dementia": float((bene["race"] == "Hispanic").sum()) / n,
        "pct_asian_dementia": float((bene["race"] == "NonHispanicAsian").sum()) / n,
    }


def _profile_from_covariates(base: dict, cov: dict) -> dict:
    """Tie a county's demographic mix to its drawn covariates."""
    p = copy.deepcopy(base)
    p["medicaid"] = cov["pct_medicaid_dementia"]
    p["disability"] = cov["pct_disability_dementia"]
    rest = {k: v for k, v in base["race_mix"].items()
            if k not in ("NonHispanicBlack", "Hispanic", "NonHispanicAsian", "NonHispanicWhite")}
    mix = {"NonHispanicBlack": cov["pct_black_dementia"], "Hispanic": cov["pct_hispanic_dementia"],
           "NonHispanicAsian": cov["pct_asian_dementia"], **rest}
    mix["NonHispanicWhite"] = 1.0 - sum(mix.values())
    p["race_mix"] = mix
    return p


def generate(config: dict, seed: int, workers: int = 1) -> SyntheticData:
    """Build a synthetic dataset from a scenario mapping.

    Recognized keys: ``name``, ``window`` (two ISO dates), ``baseline``
    (profile overrides applied to :func:`baseline_profile`), ``counties``
    (each with ``fips``, ``state``, ``n_patients`` and optional
    ``overrides`` / ``covariates``) and an optional ``outcome`` block
    (``intercept``, ``coefficients``, ``noise_sd``, ``state_effect_sd``)
    that makes the generator also emit planted county scores.
    """
    if not isinstance(config, dict):
        raise InputError("scenario config must be a mapping")
    name = str(config.get("name", "custom"))
    window = _parse_window(config)
    base = _merge(baseline_profile(), config.get("baseline") or {})
    validate_profile(base, "baseline")
    counties = config.get("counties") or []
    if not counties:
        raise InputError("scenario has no counties")
    seen = set()
    for c in counties:
        for key in ("fips", "state", "n_patients"):
            if key not in c:
                raise InputError(f"county entry {c!r} lacks {key!r}")
        fips, state = str(c["fips"]), str(c["state"]).upper()
        if len(fips) != 5 or not fips.isdigit() or STATE_FIPS.get(state) != fips[:2]:
            raise InputError(f"county {fips!r} is not a valid FIPS code in state {state!r}")
        if fips in seen:
            raise InputError(f"duplicate county {fips}")
        if int(c["n_patients"]) < 0:
            raise InputError(f"county {fips} has a negative patient count")
        seen.add(fips)
    counties = [dict(c, fips=str(c["fips"]), state=str(c["state"]).upper()) for c in counties]

    # with linked demographics the drawn covariates drive each county's mix;
    # otherwise the claim-derived shares are measured from the generated patients
    tie = bool(config.get("covariate_linked_demographics", False))
    covariates = _county_covariates(counties, seed)
    profiles = []
    for c, cov in zip(counties, covariates.to_dict("records")):
        p = _merge(base, c.get("overrides") or {})
        if tie:
            p = _profile_from_covariates(p, cov)
        validate_profile(p, f"county {c['fips']}")
        profiles.append(p)

    tasks = [(c, p, seed, window) for c, p in zip(counties, profiles)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_generate_county, tasks))
    else:
        parts = [_generate_county(t) for t in tasks]
    if not tie:
        for i, c in enumerate(counties):
            given = c.get("covariates") or {}
            for k, v in _observed_shares(parts[i][0]).items():
                if k not in given:
                    covariates.at[i, k] = v
    order = np.argsort([c["fips"] for c in counties], kind="mergesort")
    bene = pd.concat([parts[i][0] for i in order], ignore_index=True)
    hosp = pd.concat([parts[i][1] for i in order], ignore_index=True)
    covariates = covariates.iloc[order].reset_index(drop=True)

    truth = PlantedTruth(
        scenario=name,
        seed=int(seed),
        divergence={c["fips"]: divergence(p, base) for c, p in sorted(zip(counties, profiles),
                                                                     key=lambda cp: cp[0]["fips"])},
    )
    scores = None
    outcome = config.get("outcome")
    if outcome:
        scores = _planted_scores(outcome, covariates, counties, seed, truth)
    return SyntheticData(bene, hosp, covariates, truth, scores, window)


def _planted_scores(outcome: dict, covariates: pd.DataFrame, counties, seed: int, truth: PlantedTruth) -> pd.DataFrame:
    coefs = {k: float(v) for k, v in (outcome.get("coefficients") or PLANTED_COEFFICIENTS).items()}
    unknown = set(coefs) - set(PREDICTORS)
    if unknown:
        raise InputError(f"outcome coefficients name unknown predictors {sorted(unknown)}")
    intercept = float(outcome.get("intercept", 0.9))
    noise_sd = float(outcome.get("noise_sd", 0.05))
    fe_sd = float(outcome.get("state_effect_sd", 0.02))
    if noise_sd < 0 or fe_sd < 0:
        raise InputError("outcome noise_sd and state_effect_sd must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    states = sorted(set(covariates["state"]))
    effects = dict(zip(states, rng.normal(0.0, fe_sd, size=len(states)).tolist()))
    noise = rng.normal(0.0, noise_sd, size=len(covariates))
    y = np.full(len(covariates), intercept)
    for name, beta in coefs.items():
        y = y + beta * covariates[name].to_numpy()
    y = y + covariates["state"].map(effects).to_numpy() + noise
    n_pat = {c["fips"]: int(c["n_patients"]) for c in counties}
    truth.coefficients = coefs
    truth.intercept = intercept
    truth.state_effects = effects
    truth.noise_sd = noise_sd
    return pd.DataFrame({
        "stratum": covariates["county_fips"].to_numpy(),
        "level": "county",
        "method": "RandomSkewers",
        "value": y,
        "patient_count": [n_pat[f] for f in covariates["county_fips"]],
        "censored": "false",
        "n_skewers": "",
        "seed": "",
    })


# scenario library ---------------------------------------------------------


def _counties(n: int, states, n_patients: int) -> list[dict]:
    out = []
    per_state: dict[str, int] = {}
    for i in range(n):
        st = states[i % len(states)]
        k = per_state.get(st, 0)
        per_state[st] = k + 1
        out.append({"fips": f"{STATE_FIPS[st]}{2 * k + 1:03d}", "state": st, "n_patients": n_patients})
    return out


def uniform(n_counties: int = 12, states=("FL", "MT", "OH"), n_patients: int = 150) -> dict:
    return {"name": "uniform", "counties": _counties(n_counties, states, n_patients)}


PLANTED_BASELINE = {"decay": 0.02, "extra_visits_mean": 6.0, "cocode": 0.0}


def planted_divergence(shifts=tuple(np.round(np.linspace(0.1, 0.5, 10), 6)), n_baseline: int = 30,
                       n_patients: int = 4000, states=("AL", "FL", "MT", "OH", "UT"),
                       baseline: dict | None = None, n_shifted_patients: int = 1000) -> dict:
    """Baseline counties plus one county per shift, whose downgrade
    probability exceeds the baseline's by that shift.

    Patients revisit often and carry no secondary codes here, so that a
    downgrade shows up in the sequence matrices rather than being diluted
    by single-visit patients.
    """
    base = dict(PLANTED_BASELINE if baseline is None else baseline)
    base_decay = base.get("decay", baseline_profile()["decay"])
    counties = _counties(n_baseline + len(shifts), states, n_patients)
    for county, shift in zip(counties[n_baseline:], shifts):
        county["overrides"] = {"decay": round(min(1.0, base_decay + float(shift)), 12)}
        county["n_patients"] = n_shifted_patients
    return {"name": "planted-divergence", "baseline": base, "counties": counties}


def regression_recovery(n_counties: int = 500, states=STATES_10, n_patients: int = 12,
                        noise_sd: float = 0.05, coefficients: dict | None = None) -> dict:
    return {
        "name": "regression-recovery",
        "covariate_linked_demographics": True,
        "counties": _counties(n_counties, states, n_patients),
        "outcome": {"intercept": 0.9, "coefficients": dict(coefficients or PLANTED_COEFFICIENTS),
                    "noise_sd": noise_sd, "state_effect_sd": 0.02},
    }


def censoring_boundary() -> dict:
    """One large county plus counties of exactly 10 and 11 patients that
    lose nobody to the cohort filters."""
    keep_all = {"nursing_facility": 0.0, "movers": 0.0}
    return {
        "name": "censoring-boundary",
        "baseline": keep_all,
        "counties": [
            {"fips": "12001", "state": "FL", "n_patients": 400},
            {"fips": "12003", "state": "FL", "n_patients": 10},
            {"fips": "12005", "state": "FL", "n_patients": 11},
        ],
    }


def throughput(n_patients: int = 100_000, n_counties: int = 100) -> dict:
    """About ten coded events per patient, a million in total at the default size."""
    per = n_patients // n_counties
    return {
        "name": "throughput",
        "baseline": {"extra_visits_mean": 12.0, "cocode": 0.4, "nursing_facility": 0.0,
                     "gap_mix": {"Cooccurrence": 0.02, "WithinOneMonth": 0.38, "OneToThreeMonths": 0.35,
                                 "OverThreeMonths": 0.25}},
        "counties": _counties(n_counties, STATES_10, per),
    }


_BUILDERS = {
    "uniform": uniform,
    "planted-divergence": planted_divergence,
    "regression-recovery": regression_recovery,
    "censoring-boundary": censoring_boundary,
    "throughput": throughput,
}


def scenario_library() -> dict[str, dict]:
    return {name: build() for name, build in _BUILDERS.items()}


def scenario(name: str, **params) -> dict:
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise InputError(f"unknown scenario {name!r}; known scenarios: {', '.join(sorted(_BUILDERS))}") from None
    return build(**params)
