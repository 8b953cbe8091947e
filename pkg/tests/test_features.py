import numpy as np
import pytest

from atlasforest.errors import (InvalidValueError, SchemaError,
                                UnimputableColumnError)
from atlasforest.features import (CLINICAL_COLUMNS, FeatureMatrix, FeatureSet,
                                  apply_imputer, assemble_matrix, fit_imputer,
                                  parse_subject_table, write_subject_table)


def test_csv_round_trip(small_cohort, tmp_path):
    records, _ = small_cohort
    path = tmp_path / "cohort.csv"
    write_subject_table(records, path)
    reparsed = parse_subject_table(path)
    assert reparsed == records


def test_parse_well_formed(small_cohort, tmp_path):
    records, _ = small_cohort
    path = tmp_path / "three.csv"
    write_subject_table(records[:3], path)
    assert len(parse_subject_table(path)) == 3


def test_parse_missing_cell(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("subject_id,age,sex,education_years,moca_total\n"
                    "a,70,F,12,\n")
    (rec,) = parse_subject_table(path)
    assert rec.battery.moca_total is None


def test_unknown_column_rejected(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("subject_id,age,sex,education_years,lh_hipocampus_volume\n"
                    "a,70,F,12,100\n")
    with pytest.raises(SchemaError, match="hipocampus"):
        parse_subject_table(path)


def test_duplicate_subject_id(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("subject_id,age,sex,education_years\na,70,F,12\na,71,M,10\n")
    with pytest.raises(SchemaError, match="duplicate"):
        parse_subject_table(path)


def test_out_of_range_value(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("subject_id,age,sex,education_years,moca_total\na,70,F,12,31\n")
    with pytest.raises(InvalidValueError):
        parse_subject_table(path)


class TestAssemble:
    def test_hippo_only_one_column(self, small_cohort):
        records, _ = small_cohort
        m = assemble_matrix(records, FeatureSet.HIPPO_ONLY)
        assert m.column_names == ("total_hippocampus_volume",)

    def test_mri_only_204_columns(self, small_cohort):
        records, _ = small_cohort
        m = assemble_matrix(records, FeatureSet.MRI_ONLY)
        assert len(m.column_names) == 204

    def test_mri_plus_clinical_column_accounting(self, small_cohort):
        records, _ = small_cohort
        m = assemble_matrix(records, FeatureSet.MRI_PLUS_CLINICAL)
        assert len(m.column_names) == 204 + len(CLINICAL_COLUMNS)

    def test_clinical_columns(self, small_cohort):
        records, _ = small_cohort
        m = assemble_matrix(records, FeatureSet.CLINICAL)
        assert m.column_names == CLINICAL_COLUMNS

    def test_row_order_preserved(self, small_cohort):
        records, _ = small_cohort
        m = assemble_matrix(records, FeatureSet.CLINICAL)
        assert m.row_ids == tuple(r.subject_id for r in records)

    def test_empty_records(self):
        with pytest.raises(SchemaError):
            assemble_matrix([], FeatureSet.CLINICAL)


def simple_matrix(values):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(
        column_names=tuple(f"c{j}" for j in range(values.shape[1])),
        values=values,
        missing_mask=np.isnan(values),
        row_ids=tuple(f"r{i}" for i in range(values.shape[0])),
    )


class TestImputer:
    def test_median_fill(self):
        train = simple_matrix([[1.0], [np.nan], [3.0]])
        state = fit_imputer(train)
        out = apply_imputer(state, train)
        assert out.values[1, 0] == 2.0
        assert not out.missing_mask.any()

    def test_identity_when_complete(self):
        train = simple_matrix([[1.0, 2.0], [3.0, 4.0]])
        out = apply_imputer(fit_imputer(train), train)
        np.testing.assert_array_equal(out.values, train.values)

    def test_all_missing_column_errors(self):
        train = simple_matrix([[np.nan], [np.nan]])
        with pytest.raises(UnimputableColumnError):
            fit_imputer(train)

    def test_no_leakage_from_applied_matrix(self):
        train = simple_matrix([[1.0], [np.nan], [3.0]])
        state = fit_imputer(train)
        held_out_a = simple_matrix([[np.nan], [100.0]])
        held_out_b = simple_matrix([[np.nan], [-100.0]])
        a = apply_imputer(state, held_out_a)
        b = apply_imputer(state, held_out_b)
        assert a.values[0, 0] == b.values[0, 0] == 2.0


def test_matrix_invariants():
    with pytest.raises(SchemaError):
        FeatureMatrix(column_names=("a", "a"), values=np.zeros((1, 2)),
                      missing_mask=np.zeros((1, 2), dtype=bool), row_ids=("r",))
    with pytest.raises(InvalidValueError):
        FeatureMatrix(column_names=("a",), values=np.array([[np.nan]]),
                      missing_mask=np.array([[False]]), row_ids=("r",))
