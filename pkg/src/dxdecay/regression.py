"""County covariates and the fixed-effects OLS of similarity on them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats as sps

from .claims import Reject
from .errors import ContractViolation, InfeasibleModelError, InputError

PREDICTORS = (
    "pct_less_hs",
    "unemployment",
    "pct_rural",
    "pct_medicaid_dementia",
    "pct_disability_dementia",
    "pct_dementia",
    "pct_black_dementia",
    "pct_hispanic_dementia",
    "pct_asian_dementia",
)

PREDICTOR_LABELS = {
    "pct_less_hs": "Proportion of individuals with less than a high school education",
    "unemployment": "Unemployment rate",
    "pct_rural": "Proportion of individuals residing in rural areas",
    "pct_medicaid_dementia": "Proportion of dementia patients eligible for Medicaid",
    "pct_disability_dementia": "Proportion of dementia patients with disabilities",
    "pct_dementia": "Proportion of dementia patients",
    "pct_black_dementia": "Proportion of Black dementia patients",
    "pct_hispanic_dementia": "Proportion of Hispanic dementia patients",
    "pct_asian_dementia": "Proportion of Asian dementia patients",
}

INTERCEPT = "intercept"
COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class CountyCovariates:
    county_fips: str
    state: str
    pct_less_hs: float
    unemployment: float
    pct_rural: float
    pct_medicaid_dementia: float
    pct_disability_dementia: float
    pct_dementia: float
    pct_black_dementia: float
    pct_hispanic_dementia: float
    pct_asian_dementia: float


@dataclass
class CovariateTable:
    frame: pd.DataFrame
    rejects: list[Reject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self):
        for row in self.frame.itertuples(index=False):
            yield CountyCovariates(**row._asdict())


def load_covariates(path: str | Path, delimiter: str = ",") -> CovariateTable:
    """Read county covariates; proportions must already be fractions in [0, 1]."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, na_filter=False)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read covariates {path}: {exc}") from exc
    except pd.errors.EmptyDataError:
        raise InputError(f"{path} is empty; expected a header row") from None
    frame.columns = [c.strip() for c in frame.columns]
    required = ("county_fips", "state", *PREDICTORS)
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputError(f"{path}: covariate header lacks {missing}")

    fips = frame["county_fips"].str.strip()
    dup = fips[fips.duplicated(keep=False)]
    if len(dup):
        raise InputError(f"{path}: duplicate county_fips {dup.iat[0]!r}")

    rejects: list[Reject] = []
    bad = np.zeros(len(frame), dtype=bool)
    bad_fips = ~fips.str.match(r"^\d{5}$").to_numpy()
    for i in np.flatnonzero(bad_fips):
        rejects.append(Reject(int(i) + 1, "county_fips", f"county_fips {fips.iat[i]!r} is not 5 digits"))
    bad |= bad_fips
    values = {}
    for name in PREDICTORS:
        raw = frame[name].str.strip()
        num = pd.to_numeric(raw, errors="coerce")
        nonnum = num.isna().to_numpy()
        out_of_range = (~nonnum) & ((num < 0) | (num > 1)).to_numpy()
        for i in np.flatnonzero(nonnum):
            rejects.append(Reject(int(i) + 1, name, f"{name} value {raw.iat[i]!r} is not a fraction"))
        for i in np.flatnonzero(out_of_range):
            rejects.append(Reject(int(i) + 1, name, f"{name} = {raw.iat[i]} is outside [0, 1]"))
        bad |= nonnum | out_of_range
        values[name] = num
    good = ~bad
    out = pd.DataFrame({"county_fips": fips[good].to_numpy(),
                        "state": frame["state"].str.strip().str.upper()[good].to_numpy()})
    for name in PREDICTORS:
        out[name] = values[name][good].to_numpy(dtype=float)
    rejects.sort(key=lambda r: (r.row, r.column))
    return CovariateTable(out, rejects)


@dataclass(frozen=True)
class Coefficient:
    estimate: float
    std_error: float
    t: float
    p: float


@dataclass
class RegressionResult:
    coefficients: dict[str, Coefficient]
    r_squared: float
    n_observations: int
    fixed_effect_groups: int
    dropped_collinear: list[str]
    residual_df: int
    reference_group: str | None = None
    fixed_effects: dict[str, Coefficient] = field(default_factory=dict)
    intercept: Coefficient | None = None
    se_type: str = "classical"
    weighted: bool = False
    residuals: np.ndarray | None = None

    def estimate(self, predictor: str) -> float:
        return self.coefficients[predictor].estimate


def ols_qr(x: np.ndarray, y: np.ndarray, names: Sequence[str], weights: np.ndarray | None = None,
           se_type: str = "classical"):
    """Least squares through a Householder QR of the design.

    Columns whose QR pivot is negligible relative to the column norm are
    linearly dependent on earlier columns; they are dropped (so the latest
    of a collinear set goes) and the fit is repeated on the rest.
    Returns (kept names, estimates, covariance, residuals, residual df).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float))
        xw, yw = x * w[:, None], y * w
    else:
        xw, yw = x, y
    col_norm = np.linalg.norm(xw, axis=0)
    keep = []
    for j in range(xw.shape[1]):
        if col_norm[j] == 0:
            continue
        trial = keep + [j]
        r = np.linalg.qr(xw[:, trial], mode="r")
        if abs(r[-1, -1]) > COLLINEAR_TOL * max(col_norm[j], 1.0):
            keep = trial
    kept = [names[j] for j in keep]
    xk = xw[:, keep]
    p = len(keep)
    if n < p:
        raise InfeasibleModelError(f"{n} observations cannot identify {p} parameters")
    q, r = np.linalg.qr(xk, mode="reduced")
    beta = np.linalg.solve(r, q.T @ yw) if p else np.empty(0)
    resid_w = yw - xk @ beta
    resid = y - x[:, keep] @ beta
    df = n - p
    r_inv = np.linalg.solve(r, np.eye(p)) if p else np.empty((0, 0))
    xtx_inv = r_inv @ r_inv.T
    if se_type == "classical":
        s2 = float(resid_w @ resid_w) / df if df > 0 else math.nan
        cov = s2 * xtx_inv
    elif se_type == "hc1":
        meat = (xk * (resid_w ** 2)[:, None]).T @ xk
        cov = xtx_inv @ meat @ xtx_inv * (n / df if df > 0 else math.nan)
    else:
        raise ContractViolation(f"unknown standard-error type {se_type!r}")
    return kept, beta, cov, resid, df


def _coef(est: float, var: float, df: int) -> Coefficient:
    se = math.sqrt(var) if var >= 0 and not math.isnan(var) else math.nan
    if se > 0 and df > 0:
        t = est / se
        p = float(2.0 * sps.t.sf(abs(t), df))
    else:
        t, p = math.nan, math.nan
    return Coefficient(float(est), se, t, p)


def join_scores(scores, covariates: CovariateTable | pd.DataFrame) -> pd.DataFrame:
    """Non-censored county scores with a value, inner-joined to covariates by FIPS."""
    cov = covariates.frame if isinstance(covariates, CovariateTable) else covariates
    rows = [(s.stratum, s.value, s.patient_count) for s in scores
            if s.level == "county" and not s.censored and s.value is not None]
    sc = pd.DataFrame(rows, columns=["county_fips", "score", "patient_count"])
    return sc.merge(cov, on="county_fips", how="inner").sort_values("county_fips", kind="mergesort") \
        .reset_index(drop=True)


def fit_fixed_effects(
    scores,
    covariates: CovariateTable | pd.DataFrame,
    fe_group: str = "state",
    predictors: Sequence[str] = PREDICTORS,
    weights: str | None = None,
    se_type: str = "classical",
) -> RegressionResult:
    """Regress county similarity on covariates with group indicator columns.

    The design is intercept, ``predictors``, then one indicator per
    ``fe_group`` level except the lexicographically first.
    ``weights="patients"`` weights counties by patient count.
    """
    data = join_scores(scores, covariates)
    return fit_frame(data, "score", fe_group, predictors, weights, se_type)


def fit_frame(data: pd.DataFrame, outcome: str = "score", fe_group: str | None = "state",
              predictors: Sequence[str] = PREDICTORS, weights: str | None = None,
              se_type: str = "classical") -> RegressionResult:
    n = len(data)
    if n == 0:
        raise InfeasibleModelError("no non-censored county scores join the covariates")
    groups = sorted(set(data[fe_group])) if fe_group else []
    names = [INTERCEPT, *predictors] + [f"{fe_group}={g}" for g in groups[1:]]
    cols = [np.ones(n)] + [data[p].to_numpy(dtype=float) for p in predictors]
    for g in groups[1:]:
        cols.append((data[fe_group] == g).to_numpy(dtype=float))
    x = np.column_stack(cols)
    if n < x.shape[1]:
        raise InfeasibleModelError(
            f"{n} observations but {x.shape[1]} parameters (intercept, {len(predictors)} predictors, "
            f"{max(len(groups) - 1, 0)} fixed effects)"
        )
    y = data[outcome].to_numpy(dtype=float)
    w = None
    if weights == "patients":
        w = data["patient_count"].to_numpy(dtype=float)
    elif weights not in (None, "none"):
        raise ContractViolation(f"unknown weighting {weights!r}")
    kept, beta, cov, resid, df = ols_qr(x, y, names, w, se_type)

    if w is None:
        ssr = float(resid @ resid)
        sst = float(((y - y.mean()) ** 2).sum())
    else:
        ybar = float((w * y).sum() / w.sum())
        ssr = float((w * resid ** 2).sum())
        sst = float((w * (y - ybar) ** 2).sum())
    # an outcome that is constant up to rounding has nothing to explain
    scale = float(np.abs(y).max()) if n else 0.0
    flat = sst <= (1e-12 * max(scale, 1e-300)) ** 2 * n
    r2 = 0.0 if flat else min(1.0, max(0.0, 1.0 - ssr / sst))

    coefs = {}
    fes = {}
    intercept = None
    for i, name in enumerate(kept):
        c = _coef(beta[i], cov[i, i], df)
        if name == INTERCEPT:
            intercept = c
        elif name in predictors:
            coefs[name] = c
        else:
            fes[name.split("=", 1)[1]] = c
    dropped = [nm for nm in names if nm not in kept]
    return RegressionResult(
        coefficients=coefs,
        r_squared=r2,
        n_observations=n,
        fixed_effect_groups=len(groups),
        dropped_collinear=dropped,
        residual_df=df,
        reference_group=groups[0] if groups else None,
        fixed_effects=fes,
        intercept=intercept,
        se_type=se_type,
        weighted=w is not None,
        residuals=resid,
    )


def interpret_delta(result: RegressionResult, predictor: str, delta: float) -> float:
    """Change in the outcome implied by moving ``predictor`` by ``delta``
    (0.1 reads as "per 10 percentage points")."""
    if predictor not in result.coefficients:
        raise ContractViolation(f"predictor {predictor!r} not in the fitted model")
    return result.coefficients[predictor].estimate * delta


def _num(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


REPORT_HEADER = ["predictor", "label", "estimate", "std_error", "t", "p", "significant"]


def write_report(path: str | Path, result: RegressionResult, alpha: float = 0.05) -> None:
    """One row per predictor, then the intercept."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for name in PREDICTORS:
            if name in result.coefficients:
                c = result.coefficients[name]
                sig = "" if math.isnan(c.p) else ("true" if c.p < alpha else "false")
                w.writerow([name, PREDICTOR_LABELS[name], _num(c.estimate), _num(c.std_error), _num(c.t),
                            _num(c.p), sig])
            else:
                w.writerow([name, PREDICTOR_LABELS[name], "", "", "", "", "dropped"])
        if result.intercept is not None:
            c = result.intercept
            w.writerow([INTERCEPT, "Intercept", _num(c.estimate), _num(c.std_error), _num(c.t), _num(c.p), ""])


def write_fit_summary(path: str | Path, result: RegressionResult) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["statistic", "value"])
        w.writerow(["r_squared", _num(result.r_squared)])
        w.writerow(["n_observations", result.n_observations])
        w.writerow(["fixed_effect_groups", result.fixed_effect_groups])
        w.writerow(["reference_group", result.reference_group or ""])
        w.writerow(["residual_df", result.residual_df])
        w.writerow(["se_type", result.se_type])
        w.writerow(["weighted", "true" if result.weighted else "false"])
        w.writerow(["dropped_collinear", ";".join(result.dropped_collinear)])


def write_sensitivity_table(path: str | Path, columns: Iterable[tuple[str, RegressionResult]]) -> None:
    """Wide table: one row per predictor, one ``estimate (SE)`` column per
    model variant, plus R-squared and observation rows."""
    columns = list(columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predictor"] + [label for label, _ in columns])
        for name in PREDICTORS:
            cells = []
            for _, res in columns:
                c = res.coefficients.get(name)
                cells.append("" if c is None else f"{c.estimate:.4f} ({c.std_error:.4f})")
            w.writerow([name] + cells)
        w.writerow(["r_squared"] + [f"{res.r_squared:.4f}" for _, res in columns])
        w.writerow(["n_observations"] + [res.n_observations for _, res in columns])
