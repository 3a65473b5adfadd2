from __future__ import annotations

import io

import pytest

from rxcheck.records import (
    AGE_OUT_OF_RANGE,
    DOSE_MISMATCH,
    NON_POSITIVE_RX,
    REPLAN_SUSPECT,
    FeatureSpec,
    Prescription,
    TreatmentRecord,
    default_schema,
    read_records_csv,
    record_from_row,
    record_to_row,
    records_csv_text,
    validate_record,
)

from conftest import rec


class TestValidateRecord:
    def test_consistent_record_is_ok(self):
        # 4 x 1200 = 4800 on both totals.
        record = rec("a", 4, 1200, total_dose=4800, accumulated_dose=4800)
        assert validate_record(record).ok

    def test_dose_mismatch(self):
        # 5 x 400 = 2000, not 2200.
        record = rec("a", 5, 400, total_dose=2200, accumulated_dose=2200)
        result = validate_record(record)
        assert [v.kind for v in result.violations] == [DOSE_MISMATCH]

    def test_replan_suspect(self):
        record = rec("a", 10, 300, total_dose=3000, accumulated_dose=6000)
        result = validate_record(record)
        assert [v.kind for v in result.violations] == [REPLAN_SUSPECT]

    def test_replan_reported_regardless_of_other_fields(self):
        record = rec("a", 0, 300, total_dose=999, accumulated_dose=6000, age_at_tx=130)
        kinds = {v.kind for v in validate_record(record).violations}
        assert REPLAN_SUSPECT in kinds
        assert {NON_POSITIVE_RX, DOSE_MISMATCH, AGE_OUT_OF_RANGE} <= kinds

    def test_age_bounds(self):
        assert validate_record(rec("a", 1, 100, age_at_tx=0)).ok
        assert validate_record(rec("a", 1, 100, age_at_tx=120)).ok
        assert not validate_record(rec("a", 1, 100, age_at_tx=121)).ok
        assert validate_record(rec("a", 1, 100, age_at_tx=None)).ok

    def test_deterministic_and_pure(self):
        record = rec("a", 5, 400, total_dose=2200)
        assert validate_record(record) == validate_record(record)


class TestSchema:
    def test_default_schema_features(self, schema):
        assert schema.names == ("age_at_tx", "energy", "intent", "icd10", "morphology")
        kinds = {spec.name: spec.kind for spec in schema}
        assert kinds["age_at_tx"] == "numeric"
        assert all(spec.weight == 1.0 for spec in schema)

    def test_bind_fixes_ranges_and_vocab(self, schema):
        records = [
            rec("a", 1, 100, energy="x06", age_at_tx=40),
            rec("b", 1, 100, energy="x15", age_at_tx=70),
        ]
        bound = schema.bind(records)
        assert bound.spec("age_at_tx").value_range == (40.0, 70.0)
        assert bound.spec("energy").vocabulary == ("x06", "x15")

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            FeatureSpec("age_at_tx", "numeric", weight=0.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            FeatureSpec("age_at_tx", "ordinal")


class TestCsvRoundTrip:
    def test_round_trip_preserves_record(self):
        record = rec(
            "P1/1", 4, 1200, technique="SBRT",
            energy="x06FFF", intent="palliative", icd10="C15.6",
            morphology="87203", age_at_tx=49,
        )
        text = records_csv_text([record])
        (parsed,) = read_records_csv(io.StringIO(text))
        assert parsed == record
        assert validate_record(parsed) == validate_record(record)

    def test_missing_fields_round_trip(self):
        record = rec("P2/1", 5, 400, intent=None, morphology=None, age_at_tx=None,
                     energy="mixed photon", icd10="C34.90")
        text = records_csv_text([record])
        (parsed,) = read_records_csv(io.StringIO(text))
        assert parsed == record
        assert parsed.intent is None and parsed.age_at_tx is None

    def test_empty_and_dash_cells_mean_missing(self):
        row = record_to_row(rec("a", 5, 400, icd10="C34.90", energy="x06"))
        row["intent"] = "-"
        row["morphology"] = ""
        parsed = record_from_row(row)
        assert parsed.intent is None and parsed.morphology is None

    def test_required_cell_missing_raises(self):
        row = record_to_row(rec("a", 5, 400))
        row["fractions"] = ""
        with pytest.raises(ValueError):
            record_from_row(row)


class TestPrescription:
    def test_rx_pair(self):
        assert Prescription(5, 400, 2000, 2000).rx == (5, 400)

    def test_create_defaults_totals(self):
        record = TreatmentRecord.create("a", 5, 400, "3D")
        assert record.prescription.total_dose == 2000
        assert record.prescription.accumulated_dose == 2000
