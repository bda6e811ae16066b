import csv
import filecmp
import json
import subprocess
import sys

import pytest

from dxdecay.cli import main

INPUTS = ["beneficiaries", "hospitalizations", "covariates"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def synth_inputs(tmp_path, scenario="uniform", seed=1):
    out = tmp_path / f"{scenario}-{seed}"
    if not out.exists():
        assert main(["synth", "--scenario", scenario, "--seed", str(seed), "--out", str(out)]) == 0
    return out


def input_flags(data, covariates=True):
    flags = ["--beneficiaries", str(data / "beneficiaries.csv"), "--hospitalizations", str(data / "hospitalizations.csv")]
    if covariates:
        flags += ["--covariates", str(data / "covariates.csv")]
    return flags


def test_synth_writes_inputs_and_truth(tmp_path):
    data = synth_inputs(tmp_path)
    for name in INPUTS:
        assert (data / f"{name}.csv").stat().st_size > 0
    truth = json.loads((data / "truth.json").read_text())
    assert truth["scenario"] == "uniform"
    again = tmp_path / "again"
    assert main(["synth", "--scenario", "uniform", "--seed", "1", "--out", str(again)]) == 0
    for name in INPUTS:
        assert filecmp.cmp(data / f"{name}.csv", again / f"{name}.csv", shallow=False)


def test_synth_unknown_scenario(tmp_path, capsys):
    assert main(["synth", "--scenario", "bogus", "--out", str(tmp_path)]) == 2
    assert "uniform" in capsys.readouterr().err


def test_pipeline_artifacts_and_determinism(tmp_path):
    data = synth_inputs(tmp_path)
    runs = []
    for name, workers in (("r1", "1"), ("r2", "3")):
        out = tmp_path / name
        assert main(["pipeline", *input_flags(data), "--skewers", "500", "--workers", workers, "--out", str(out)]) == 0
        runs.append(out)
    expected = {"rejects.csv", "demographics.csv", "cohort_stats.csv", "code_frequencies.csv",
                "category_state_frequencies.csv", "matrices.csv", "matrix_tests.csv", "scores.csv",
                "regression.csv", "regression_fit.csv", "manifest.json"}
    assert {p.name for p in runs[0].iterdir()} == expected
    manifest = json.loads((runs[0] / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert [s["stage"] for s in manifest["stages"]] == ["cohort", "frequencies", "mine", "similarity", "regress"]
    assert manifest["seeds"]["skewers"] == 20160101
    for name in expected:
        assert filecmp.cmp(runs[0] / name, runs[1] / name, shallow=False), name
    coef = [r["predictor"] for r in rows(runs[0] / "regression.csv")]
    assert len(coef) == 10 and coef[-1] == "intercept" and "pct_rural" in coef


def test_missing_covariates_fails_at_regress(tmp_path, capsys):
    data = synth_inputs(tmp_path)
    out = tmp_path / "run"
    assert main(["pipeline", *input_flags(data, covariates=False), "--skewers", "100", "--out", str(out)]) == 2
    assert "regress" in capsys.readouterr().err
    assert (out / "scores.csv").exists() and (out / "matrices.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed at regress"


def test_duplicate_fips_is_input_error(tmp_path):
    data = synth_inputs(tmp_path)
    lines = (data / "covariates.csv").read_text().splitlines()
    bad = tmp_path / "dup.csv"
    bad.write_text("\n".join([*lines, lines[1]]) + "\n")
    out = tmp_path / "run"
    flags = input_flags(data, covariates=False) + ["--covariates", str(bad)]
    assert main(["pipeline", *flags, "--skewers", "100", "--out", str(out)]) == 2


def test_underidentified_regression_exit_3(tmp_path):
    data = synth_inputs(tmp_path)
    lines = (data / "covariates.csv").read_text().splitlines()
    few = tmp_path / "few.csv"
    few.write_text("\n".join(lines[:4]) + "\n")
    flags = input_flags(data, covariates=False) + ["--covariates", str(few)]
    assert main(["pipeline", *flags, "--skewers", "100", "--out", str(tmp_path / "run")]) == 3


@pytest.mark.parametrize("granularity,size", [("Category5", 5), ("Code17", 17)])
def test_mine_matrix_shape(tmp_path, granularity, size):
    data = synth_inputs(tmp_path)
    out = tmp_path / "mine"
    assert main(["mine", *input_flags(data, covariates=False), "--granularity", granularity, "--out", str(out)]) == 0
    national = [r for r in rows(out / "matrices.csv") if r["stratum"] == "national"]
    assert len(national) == 4 * size * size
    assert len({r["antecedent"] for r in national}) == size


def test_similarity_censoring_row(tmp_path):
    data = synth_inputs(tmp_path, "censoring-boundary", seed=2)
    out = tmp_path / "sim"
    assert main(["similarity", *input_flags(data, covariates=False), "--skewers", "200", "--out", str(out)]) == 0
    scores = {r["stratum"]: r for r in rows(out / "scores.csv")}
    assert scores["12003"]["censored"] == "true" and scores["12003"]["value"] == ""
    assert scores["12003"]["patient_count"] == "10"
    assert scores["12005"]["censored"] == "false" and scores["12005"]["patient_count"] == "11"


def test_one_minus_mad_sensitivity_table(tmp_path):
    data = synth_inputs(tmp_path)
    out = tmp_path / "mad"
    assert main(["pipeline", *input_flags(data), "--method", "OneMinusMAD", "--skewers", "200",
                 "--out", str(out)]) == 0
    methods = {r["method"] for r in rows(out / "scores.csv")}
    assert methods == {"RandomSkewers", "OneMinusMAD"}
    with open(out / "regression_sensitivity.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[1:] == ["Category5 RS", "Category5 1-MAD", "Code17 RS"]


def test_yaml_config_with_override(tmp_path):
    data = synth_inputs(tmp_path)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        f"beneficiaries: {data / 'beneficiaries.csv'}\n"
        f"hospitalizations: {data / 'hospitalizations.csv'}\n"
        "granularity: Code17\nskewers: 50\nlevel: state\n"
    )
    out = tmp_path / "run"
    assert main(["similarity", "--config", str(cfg), "--level", "county", "--out", str(out)]) == 0
    scores = rows(out / "scores.csv")
    assert {r["level"] for r in scores} == {"county"} and scores[0]["n_skewers"] == "50"
    national = [r for r in rows(out / "matrices.csv") if r["stratum"] == "national"]
    assert len(national) == 4 * 17 * 17


def test_bad_config_values(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("colour: blue\n")
    assert main(["mine", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert main(["mine", "--alpha", "2", "--beneficiaries", "x", "--hospitalizations", "y",
                 "--out", str(tmp_path / "o")]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dxdecay.cli", "synth", "--scenario", "nope", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "known scenarios" in res.stderr
