import filecmp

import numpy as np
import pandas as pd
import pytest

from dxdecay import synth
from dxdecay.claims import load_beneficiaries, load_hospitalizations
from dxdecay.codebook import DEFAULT_CODEBOOK, DiagnosticCategory
from dxdecay.cohort import build_cohort
from dxdecay.errors import InputError

NS = DiagnosticCategory.NonSpecificDementia


def one_county(n, seed=0, **overrides):
    cfg = {"baseline": overrides, "counties": [{"fips": "12001", "state": "FL", "n_patients": n}]}
    return synth.generate(cfg, seed=seed)


def visit_categories(hosp):
    """Per row, the categories of the dementia codes in slot order."""
    dx = hosp[[f"dx{i}" for i in range(1, 26)]].to_numpy()
    out = []
    for row in dx:
        out.append([DEFAULT_CODEBOOK.classify_code(c) for c in row if c and DEFAULT_CODEBOOK.classify_code(c)])
    return out


def test_minimal_scenario():
    data = one_county(1, extra_visits_mean=0.0)
    assert len(data.hospitalizations) == 1 and len(data.beneficiaries) == 1


def test_decay_zero_never_downgrades():
    data = one_county(2000, seed=1, decay=0.0, extra_visits_mean=3.0)
    h = data.hospitalizations.assign(cats=visit_categories(data.hospitalizations))
    for _, visits in h.groupby("patient_id", sort=False)["cats"]:
        visits = list(visits)
        first_specific = [c for c in visits[0] if c is not NS]
        for later in visits[1:]:
            if first_specific:
                assert first_specific[0] in later


def test_decay_one_all_alzheimers():
    data = one_county(1000, seed=2, decay=1.0, extra_visits_mean=3.0,
                      category_mix={"AlzheimersDisease": 1.0, "VascularDementia": 0.0, "NonSpecificDementia": 0.0,
                                    "PicksDisease": 0.0, "NeurocognitiveDisorder": 0.0})
    h = data.hospitalizations.assign(cats=visit_categories(data.hospitalizations))
    later_rows = 0
    for _, visits in h.groupby("patient_id", sort=False)["cats"]:
        visits = list(visits)
        assert visits[0][0] is DiagnosticCategory.AlzheimersDisease
        for later in visits[1:]:
            later_rows += 1
            assert later and all(c is NS for c in later)
    assert later_rows > 1000


def test_category_mix_fidelity():
    data = one_county(12_000, seed=3)
    first = data.hospitalizations.drop_duplicates("patient_id", keep="first")
    cats = pd.Series([v[0].value for v in visit_categories(first)])
    share = cats.value_counts(normalize=True)
    for cat, p in synth.baseline_profile()["category_mix"].items():
        assert abs(share.get(cat, 0.0) - p) < 0.02


def test_medicaid_share():
    data = one_county(100_000, seed=4, medicaid=0.40, extra_visits_mean=0.0, filler_mean=0.0)
    share = (data.beneficiaries["medicaid"] == "1").mean()
    assert 0.39 <= share <= 0.41


def test_reproducible_and_worker_independent(tmp_path):
    cfg = synth.uniform(n_counties=6, n_patients=40)
    a = synth.generate(cfg, seed=9).write(tmp_path / "a")
    b = synth.generate(cfg, seed=9, workers=3).write(tmp_path / "b")
    for name in a:
        assert filecmp.cmp(a[name], b[name], shallow=False), name
    c = synth.generate(cfg, seed=10).write(tmp_path / "c")
    assert not filecmp.cmp(a["hospitalizations"], c["hospitalizations"], shallow=False)


def test_roundtrip_zero_rejects(tmp_path):
    cfg = synth.uniform(n_counties=6, n_patients=60)
    cfg["baseline"] = {"movers": 0.1}
    data = synth.generate(cfg, seed=5)
    paths = data.write(tmp_path)
    bene = load_beneficiaries(paths["beneficiaries"])
    hosp = load_hospitalizations(paths["hospitalizations"])
    assert bene.rejects == [] and hosp.rejects == []
    assert len(bene) == 360 and len(hosp) == len(data.hospitalizations)
    from_files = build_cohort(bene, hosp)
    in_memory = build_cohort(data.beneficiary_table(), data.hospitalization_table())
    assert from_files.patients["patient_id"].tolist() == in_memory.patients["patient_id"].tolist()
    np.testing.assert_array_equal(from_files.event_code, in_memory.event_code)
    assert from_files.stats["zip_unstable_patients"] > 0


def test_dates_inside_window():
    data = one_county(500, seed=6, extra_visits_mean=8.0)
    d = pd.to_datetime(data.hospitalizations["admission_date"])
    assert d.min() >= pd.Timestamp("2016-01-01") and d.max() <= pd.Timestamp("2018-12-31")


def test_scenario_library_contents():
    lib = synth.scenario_library()
    assert {"uniform", "planted-divergence", "regression-recovery"} <= set(lib)
    data = synth.generate(synth.uniform(n_counties=3, n_patients=5), seed=0)
    assert set(data.truth.divergence.values()) == {0.0}


def test_planted_shift_ordering():
    cfg = synth.planted_divergence(shifts=(0.1, 0.2, 0.3), n_baseline=2, n_patients=5, n_shifted_patients=5)
    truth = synth.generate(cfg, seed=0).truth
    div = [truth.divergence[c["fips"]] for c in cfg["counties"]]
    assert div[:2] == [0.0, 0.0]
    assert div[2:] == pytest.approx([0.1, 0.2, 0.3])


def test_regression_truth_stored():
    cfg = synth.regression_recovery(n_counties=30, n_patients=2)
    data = synth.generate(cfg, seed=0)
    assert data.truth.coefficients["pct_rural"] == -0.19
    assert data.truth.coefficients["pct_dementia"] == 1.27
    assert len(data.scores) == 30


def test_invalid_profiles():
    with pytest.raises(InputError, match="sum"):
        one_county(5, category_mix={"AlzheimersDisease": 0.5, "VascularDementia": 0.1, "NonSpecificDementia": 0.1,
                                    "PicksDisease": 0.1, "NeurocognitiveDisorder": 0.1})
    with pytest.raises(InputError):
        one_county(5, decay=1.5)
    with pytest.raises(InputError, match="known scenarios"):
        synth.scenario("nope")
    with pytest.raises(InputError):
        synth.generate({"counties": [{"fips": "13001", "state": "FL", "n_patients": 1}]}, seed=0)


def test_load_scenario_yaml(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("name: tiny\nbaseline:\n  decay: 0.3\ncounties:\n  - {fips: '30001', state: MT, n_patients: 4}\n")
    cfg = synth.load_scenario(path)
    data = synth.generate(cfg, seed=1)
    assert data.truth.scenario == "tiny" and len(data.beneficiaries) == 4
