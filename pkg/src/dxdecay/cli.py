"""Command-line entry point: ``dxdecay <subcommand> [options]``.

Settings come from an optional YAML file (``--config``) with command-line
flags taking precedence. Exit status is 0 on success, 1 on an internal
error, 2 on bad input or configuration and 3 when a model or score cannot
be identified from the data.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import platform
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import scipy
import yaml

from . import claims, cohort as cohort_mod, regression, reports, similarity, synth
from .errors import ContractViolation, DxDecayError, InfeasibleModelError, InputError
from .tspm import NATIONAL, Granularity, strata_at

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2, 3
LEVELS = ("state", "county", "race")


@dataclass
class PipelineConfig:
    beneficiaries: str | None = None
    hospitalizations: str | None = None
    covariates: str | None = None
    scores: str | None = None
    window: tuple[dt.date, dt.date] = claims.DEFAULT_WINDOW
    min_age: int = 65
    granularity: Granularity = Granularity.Category5
    alpha: float = similarity.DEFAULT_ALPHA
    skewers: int = similarity.DEFAULT_SKEWERS
    seed: int = similarity.DEFAULT_SEED
    censor_threshold: int = similarity.DEFAULT_CENSOR
    method: similarity.Method = similarity.Method.RandomSkewers
    level: str = "county"
    out: str = "out"
    workers: int = 1
    se_type: str = "classical"
    weights: str = "none"

    def validate(self) -> "PipelineConfig":
        if not 0.0 < self.alpha < 1.0:
            raise InputError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.skewers < 1:
            raise InputError(f"skewers must be >= 1, got {self.skewers}")
        if self.censor_threshold < 1:
            raise InputError(f"censor threshold must be >= 1, got {self.censor_threshold}")
        if self.level not in LEVELS:
            raise InputError(f"level must be one of {LEVELS}, got {self.level!r}")
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        if self.se_type not in ("classical", "hc1"):
            raise InputError(f"se_type must be classical or hc1, got {self.se_type!r}")
        if self.weights not in ("none", "patients"):
            raise InputError(f"weights must be none or patients, got {self.weights!r}")
        if self.window[1] < self.window[0]:
            raise InputError(f"study window ends before it starts: {self.window[0]}..{self.window[1]}")
        return self

    def echo(self) -> dict:
        """Settings that determine the outputs (no output path or worker count)."""
        d = {}
        for f in dataclasses.fields(self):
            if f.name in ("out", "workers"):
                continue
            v = getattr(self, f.name)
            if f.name == "window":
                v = [v[0].isoformat(), v[1].isoformat()]
            elif hasattr(v, "value"):
                v = v.value
            d[f.name] = v
        return d


def _coerce(name: str, value: Any) -> Any:
    try:
        if name == "window":
            if isinstance(value, str):
                value = value.split("..")
            lo, hi = (v if isinstance(v, dt.date) else dt.date.fromisoformat(str(v).strip()) for v in value)
            return (lo, hi)
        if name == "granularity":
            return Granularity(value)
        if name == "method":
            return similarity.Method(value)
        if name in ("alpha",):
            return float(value)
        if name in ("min_age", "skewers", "seed", "censor_threshold", "workers"):
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError(f"{value!r} is not an integer")
            return int(value)
        if name == "level":
            return str(value).lower()
        return None if value is None else str(value)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad value for {name}: {value!r} ({exc})") from None


def load_config(path: str | Path | None, overrides: dict) -> PipelineConfig:
    data: dict = {}
    if path:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise InputError(f"{path} is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"{path}: config must be a mapping")
        data = {k.replace("-", "_"): v for k, v in data.items()}
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InputError(f"unknown config keys {unknown}")
    data.update({k: v for k, v in overrides.items() if v is not None and k in known})
    return PipelineConfig(**{k: _coerce(k, v) for k, v in data.items()}).validate()


# stages -------------------------------------------------------------------

@dataclass
class RunState:
    config: PipelineConfig
    out: Path
    rows: dict[str, int] = field(default_factory=dict)
    stages: list[dict] = field(default_factory=list)
    cohort: cohort_mod.Cohort | None = None
    sets: dict | None = None
    national: similarity.CorrelationMatrixSet | None = None
    scores: list | None = None
    alt_scores: list | None = None

    def artifact(self, name: str) -> Path:
        return self.out / name


def _require(path: str | None, what: str) -> str:
    if not path:
        raise InputError(f"no {what} file given")
    if not Path(path).is_file():
        raise InputError(f"{what} file {path} does not exist")
    return path


def stage_cohort(st: RunState) -> None:
    cfg = st.config
    bene = claims.load_beneficiaries(_require(cfg.beneficiaries, "beneficiaries"))
    hosp = claims.load_hospitalizations(_require(cfg.hospitalizations, "hospitalizations"), cfg.window)
    st.cohort = cohort_mod.build_cohort(bene, hosp, cfg.window, cfg.min_age)
    rejects = [("beneficiaries", r) for r in bene.rejects] + [("hospitalizations", r) for r in hosp.rejects]
    pd.DataFrame([(s, r.row, r.column, r.reason) for s, r in rejects],
                 columns=["source", "row", "column", "reason"]).to_csv(
        st.artifact("rejects.csv"), index=False, lineterminator="\n")
    st.rows["rejects.csv"] = len(rejects)
    demo = cohort_mod.demographic_summary(st.cohort)
    st.rows["demographics.csv"] = reports.write_table(st.artifact("demographics.csv"), demo)
    stats = pd.DataFrame(sorted(st.cohort.stats.items()), columns=["statistic", "value"])
    st.rows["cohort_stats.csv"] = reports.write_table(st.artifact("cohort_stats.csv"), stats)


def stage_frequencies(st: RunState) -> None:
    st.rows["code_frequencies.csv"] = reports.write_table(
        st.artifact("code_frequencies.csv"), reports.code_frequencies(st.cohort))
    st.rows["category_state_frequencies.csv"] = reports.write_table(
        st.artifact("category_state_frequencies.csv"), reports.category_state_frequencies(st.cohort))


def stage_mine(st: RunState) -> None:
    cfg = st.config
    st.national = similarity.stratum_matrix_sets(st.cohort, [NATIONAL], cfg.granularity, cfg.alpha)[NATIONAL]
    st.sets = similarity.stratum_matrix_sets(st.cohort, strata_at(st.cohort, cfg.level), cfg.granularity,
                                             cfg.alpha, cfg.censor_threshold, cfg.workers)
    computed = [ms for ms in st.sets.values() if not isinstance(ms, int)]
    st.rows["matrices.csv"] = similarity.write_matrices(st.artifact("matrices.csv"), [st.national, *computed])
    tests = pd.DataFrame(
        [(ms.stratum.label, ms.patient_count, ms.tests, int(ms.significant.sum())) for ms in [st.national, *computed]],
        columns=["stratum", "patients", "tests", "significant"])
    st.rows["matrix_tests.csv"] = reports.write_table(st.artifact("matrix_tests.csv"), tests)


def _other(g: Granularity) -> Granularity:
    return Granularity.Code17 if g is Granularity.Category5 else Granularity.Category5


def stage_similarity(st: RunState) -> None:
    """Random-skewers scores; with method OneMinusMAD also the 1-MAD scores and
    random-skewers scores at the other granularity, for the sensitivity table."""
    cfg = st.config
    rs, mad = similarity.Method.RandomSkewers, similarity.Method.OneMinusMAD
    st.scores = similarity.score_matrix_sets(st.national, st.sets, rs, cfg.skewers, cfg.seed, cfg.censor_threshold)
    if cfg.method is mad:
        st.scores += similarity.score_matrix_sets(st.national, st.sets, mad, cfg.skewers, cfg.seed,
                                                  cfg.censor_threshold)
    st.rows["scores.csv"] = similarity.write_scores(st.artifact("scores.csv"), st.scores)
    if cfg.method is mad:
        alt = _other(cfg.granularity)
        strata = strata_at(st.cohort, cfg.level)
        national = similarity.stratum_matrix_sets(st.cohort, [NATIONAL], alt, cfg.alpha)[NATIONAL]
        sets = similarity.stratum_matrix_sets(st.cohort, strata, alt, cfg.alpha, cfg.censor_threshold, cfg.workers)
        st.alt_scores = similarity.score_matrix_sets(national, sets, rs, cfg.skewers, cfg.seed, cfg.censor_threshold)
        name = f"scores_{alt.value}.csv"
        st.rows[name] = similarity.write_scores(st.artifact(name), st.alt_scores)


_METHOD_LABELS = {similarity.Method.RandomSkewers: "RS", similarity.Method.OneMinusMAD: "1-MAD"}


def stage_regress(st: RunState) -> None:
    """Fixed-effects fit per scoring method present. ``regression.csv`` holds
    the random-skewers model when there is one; a wide sensitivity table is
    added whenever more than one model was fitted."""
    cfg = st.config
    covariates = regression.load_covariates(_require(cfg.covariates, "covariates"))
    if cfg.scores:
        scores = similarity.read_scores(_require(cfg.scores, "scores"))
    elif st.scores is not None:
        scores = st.scores
    else:
        scores = similarity.read_scores(_require(str(st.artifact("scores.csv")), "scores"))
    weights = None if cfg.weights == "none" else cfg.weights

    def fit(subset):
        return regression.fit_fixed_effects(subset, covariates, weights=weights, se_type=cfg.se_type)

    fits = []
    for method in similarity.Method:
        subset = [s for s in scores if s.method is method]
        if subset:
            fits.append((f"{cfg.granularity.value} {_METHOD_LABELS[method]}", fit(subset)))
    if not fits:
        raise InfeasibleModelError("no scores to regress")
    if st.alt_scores and not cfg.scores:
        fits.append((f"{_other(cfg.granularity).value} RS", fit(st.alt_scores)))
    primary = fits[0][1]
    regression.write_report(st.artifact("regression.csv"), primary, cfg.alpha)
    regression.write_fit_summary(st.artifact("regression_fit.csv"), primary)
    st.rows["regression.csv"] = len(regression.PREDICTORS) + 1
    if covariates.rejects:
        claims.write_rejects(st.artifact("covariate_rejects.csv"), covariates.rejects, "covariates")
        st.rows["covariate_rejects.csv"] = len(covariates.rejects)
    if len(fits) > 1:
        regression.write_sensitivity_table(st.artifact("regression_sensitivity.csv"), fits)
        st.rows["regression_sensitivity.csv"] = len(regression.PREDICTORS) + 2


STAGES: dict[str, Callable[[RunState], None]] = {
    "cohort": stage_cohort,
    "frequencies": stage_frequencies,
    "mine": stage_mine,
    "similarity": stage_similarity,
    "regress": stage_regress,
}


def _versions() -> dict:
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"dxdecay": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def _write_manifest(st: RunState, status: str) -> None:
    manifest = {
        "status": status,
        "config": st.config.echo(),
        "seeds": {"skewers": st.config.seed},
        "versions": _versions(),
        "stages": st.stages,
        "rows": dict(sorted(st.rows.items())),
    }
    st.artifact("manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_stages(cfg: PipelineConfig, names, manifest: bool = False) -> RunState:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    st = RunState(cfg, out)
    for name in names:
        try:
            STAGES[name](st)
        except (DxDecayError, ContractViolation) as exc:
            st.stages.append({"stage": name, "status": "failed", "error": str(exc)})
            if manifest:
                _write_manifest(st, f"failed at {name}")
            exc.stage = name
            raise
        st.stages.append({"stage": name, "status": "ok"})
    if manifest:
        _write_manifest(st, "ok")
    return st


# argument parsing ---------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, inputs: bool = True) -> None:
    p.add_argument("--config", help="YAML file with settings; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (outputs do not depend on this)")
    if inputs:
        p.add_argument("--beneficiaries", help="beneficiary file")
        p.add_argument("--hospitalizations", help="hospitalization file")
        p.add_argument("--window", help="study window as START..END (ISO dates)")
        p.add_argument("--min-age", type=int, dest="min_age")


def _add_matrix(p: argparse.ArgumentParser) -> None:
    p.add_argument("--granularity", choices=[g.value for g in Granularity])
    p.add_argument("--alpha", type=float, help="family-wise error rate for the Holm step-down")
    p.add_argument("--level", choices=LEVELS, help="stratification level")
    p.add_argument("--censor-threshold", type=int, dest="censor_threshold")


def _add_scoring(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=[m.value for m in similarity.Method])
    p.add_argument("--skewers", type=int, help="number of random skewers")
    p.add_argument("--seed", type=int, help="skewer seed")


def _add_regress(p: argparse.ArgumentParser) -> None:
    p.add_argument("--covariates", help="county covariate file")
    p.add_argument("--scores", help="score file to regress instead of computed scores")
    p.add_argument("--se-type", dest="se_type", choices=["classical", "hc1"])
    p.add_argument("--weights", choices=["none", "patients"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dxdecay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--scenario", help="built-in scenario name")
    p.add_argument("--scenario-file", dest="scenario_file", help="YAML scenario description")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("frequencies", help="per-code and per-state category frequencies")
    _add_common(p)

    p = sub.add_parser("mine", help="sequence mining and correlation matrices")
    _add_common(p)
    _add_matrix(p)

    p = sub.add_parser("similarity", help="score strata against the national reference")
    _add_common(p)
    _add_matrix(p)
    _add_scoring(p)

    p = sub.add_parser("regress", help="fixed-effects regression of county scores on covariates")
    _add_common(p, inputs=False)
    _add_regress(p)
    p.add_argument("--method", choices=[m.value for m in similarity.Method])
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("pipeline", help="run every stage and write a manifest")
    _add_common(p)
    _add_matrix(p)
    _add_scoring(p)
    _add_regress(p)
    return parser


def cmd_synth(args) -> int:
    if bool(args.scenario) == bool(args.scenario_file):
        raise InputError("give exactly one of --scenario or --scenario-file")
    config = synth.load_scenario(args.scenario_file) if args.scenario_file else synth.scenario(args.scenario)
    data = synth.generate(config, seed=args.seed, workers=args.workers)
    paths = data.write(args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


_COMMAND_STAGES = {
    "frequencies": ("cohort", "frequencies"),
    "mine": ("cohort", "mine"),
    "similarity": ("cohort", "mine", "similarity"),
    "regress": ("regress",),
    "pipeline": tuple(STAGES),
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        cfg = load_config(args.config, overrides)
        run_stages(cfg, _COMMAND_STAGES[args.command], manifest=args.command == "pipeline")
        return EXIT_OK
    except DxDecayError as exc:
        stage = getattr(exc, "stage", None)
        print(f"dxdecay: {'stage ' + stage + ': ' if stage else ''}{exc}", file=sys.stderr)
        return exc.exit_code
    except ContractViolation as exc:
        print(f"dxdecay: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
