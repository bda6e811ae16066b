import datetime as dt

import pytest

from dxdecay.claims import (
    AdmissionSource, Beneficiary, BeneficiaryTable, Entitlement, HospitalizationRecord, HospitalizationTable,
    RaceEthnicity, Sex, ZipSpell,
)

D = dt.date


def bene(pid, birth_year=1940, sex="Female", race="NonHispanicWhite", medicaid=False, entitlement="Age",
         spells=(("33101", D(2010, 1, 1), None),)):
    return Beneficiary(pid, birth_year, Sex(sex), RaceEthnicity(race), medicaid, Entitlement(entitlement),
                       tuple(ZipSpell(z, s, e) for z, s, e in spells))


def hosp(pid, date, codes, source="Other", zip_code="33101", fips="12086", state="FL"):
    if isinstance(date, str):
        date = D.fromisoformat(date)
    return HospitalizationRecord(pid, date, tuple(codes), AdmissionSource(source), zip_code, fips, state)


def tables(benes, hosps):
    return BeneficiaryTable.from_records(benes), HospitalizationTable.from_records(hosps)


BENE_HEADER = "patient_id,birth_year,sex,race,medicaid,entitlement,zip,zip_start,zip_end"
HOSP_HEADER = "patient_id,admission_date,admission_source,zip,county_fips,state," + ",".join(
    f"dx{i}" for i in range(1, 26))


def hosp_line(pid, date, codes, source="Other", zip_code="33101", fips="12086", state="FL", width=25):
    slots = list(codes) + [""] * (width - len(codes))
    return ",".join([pid, date, source, zip_code, fips, state, *slots])


@pytest.fixture
def write(tmp_path):
    def _write(name, lines):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path
    return _write
