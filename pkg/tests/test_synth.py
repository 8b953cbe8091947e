import numpy as np
import pytest
from scipy.stats import kstest

from atlasforest.cohort import Group, assign_group
from atlasforest.errors import ConfigError
from atlasforest.features import (FeatureMatrix, parse_subject_table,
                                  write_subject_table)
from atlasforest.normalize import covariate_array, normalize_matrix
from atlasforest.synth import (contrast_key, default_cohort_config,
                               generate_cohort, planted_truth)

from conftest import SMALL_FEATURES, small_config


def zscore_cohort(records, feature_names):
    assignments = [assign_group(r) for r in records]
    cn_mask = np.array([a.group is Group.CN for a in assignments])
    values = np.array([[r.mri[n] for n in feature_names] for r in records])
    m = FeatureMatrix(
        column_names=tuple(feature_names),
        values=values,
        missing_mask=np.zeros_like(values, dtype=bool),
        row_ids=tuple(r.subject_id for r in records),
    )
    covs = covariate_array([_cov(r) for r in records])
    z, _ = normalize_matrix(m, cn_mask, covs)
    return z, assignments, cn_mask


def _cov(r):
    from atlasforest.normalize import Covariates
    return Covariates(age=r.age, sex_code=1 if r.sex == "F" else 0, tiv=r.etiv)


class TestDeterminism:
    def test_byte_identical_csv(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_subject_table(generate_cohort(small_config(seed=4))[0], a)
        write_subject_table(generate_cohort(small_config(seed=4))[0], b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a = generate_cohort(small_config(seed=4))[0]
        b = generate_cohort(small_config(seed=5))[0]
        assert a != b

    def test_round_trips_through_csv(self, small_cohort, tmp_path):
        records, _ = small_cohort
        path = tmp_path / "c.csv"
        write_subject_table(records, path)
        assert parse_subject_table(path) == records


class TestGroupRecovery:
    def test_labels_fully_recovered(self, small_cohort):
        records, _ = small_cohort
        for r in records:
            intended = r.subject_id.rsplit("_", 1)[0]
            assert assign_group(r).group.value == intended

    def test_boundary_mode_exercises_cutoffs(self):
        records, _ = generate_cohort(small_config(seed=2, boundary=True))
        suvrs = {r.panel.amyloid_suvr for r in records}
        assert len(suvrs) == 2  # exactly on and just under the cutoff
        for r in records:
            intended = r.subject_id.rsplit("_", 1)[0]
            assert assign_group(r).group.value == intended


class TestPlantedEffects:
    def test_planted_delta_recovered_in_z(self):
        # enough rows per group that the mean-z sampling error is ~0.06
        cfg = small_config(seed=3, n_per_group={"tAD": 300, "atAD": 300,
                                                "nonAD": 300, "CN": 300})
        records, _ = generate_cohort(cfg)
        z, assignments, _ = zscore_cohort(records, SMALL_FEATURES)
        groups = np.array([a.group.value for a in assignments])
        # atAD precuneus volume planted at 3.0 noise-SD units
        col = z.column("lh_precuneus_volume")
        assert col[groups == "atAD"].mean() == pytest.approx(3.0, abs=0.3)
        # unplanted feature stays near zero for that group
        col = z.column("lh_cuneus_volume")
        assert abs(col[groups == "atAD"].mean()) <= 0.3

    def test_cn_zscores_standard_normal(self, small_cohort):
        records, _ = small_cohort
        z, _, cn_mask = zscore_cohort(records, SMALL_FEATURES)
        n = int(cn_mask.sum())
        for name in ("lh_precuneus_volume", "rh_insula_thickness"):
            col = z.column(name)[cn_mask]
            assert abs(col.mean()) <= 3.0 / np.sqrt(n)
            assert abs(np.std(col, ddof=1) - 1.0) <= 5.0 / np.sqrt(n)

    def test_null_cohort_z_is_standard_normal(self):
        # no planted effects: pooled z-scores over all groups pass a KS check
        cfg = small_config(seed=6, planted={})
        records, truth = generate_cohort(cfg)
        assert all(not v for v in truth.contrasts.values())
        z, _, _ = zscore_cohort(records, SMALL_FEATURES)
        col = z.column("lh_fusiform_thickness")
        assert kstest(col, "norm").pvalue > 0.01


class TestTruth:
    def test_contrast_key(self):
        assert contrast_key("atAD", "nonAD") == "atAD_vs_nonAD"

    def test_signs_reflect_delta_differences(self):
        cfg = small_config(seed=0)
        truth = planted_truth(cfg)
        # atAD has precuneus 3.0, nonAD has 0 -> +1 for atAD_vs_nonAD
        fwd = truth.contrasts["atAD_vs_nonAD"]
        assert fwd["lh_precuneus_volume"] == 1
        assert truth.contrasts["nonAD_vs_atAD"]["lh_precuneus_volume"] == -1
        # hippocampus: tAD 3.0 vs nonAD 2.0 -> +1; equal deltas drop out
        assert truth.contrasts["tAD_vs_nonAD"]["lh_hippocampus_volume"] == 1
        cfg2 = small_config(seed=0, planted={
            "tAD": {"lh_hippocampus_volume": 2.0},
            "nonAD": {"lh_hippocampus_volume": 2.0},
        })
        assert "lh_hippocampus_volume" not in planted_truth(cfg2).contrasts["tAD_vs_nonAD"]


class TestConfigValidation:
    def test_bad_feature_name(self):
        with pytest.raises(ConfigError):
            small_config(planted={"tAD": {"lh_hipocampus_volume": 2.0}})

    def test_bad_group(self):
        with pytest.raises(ConfigError):
            small_config(planted={"AD": {"lh_hippocampus_volume": 2.0}})

    def test_derived_total_not_plantable(self):
        with pytest.raises(ConfigError):
            small_config(planted={"tAD": {"total_hippocampus_volume": 2.0}})


class TestFullScaleDefault:
    def test_counts_and_consistency(self):
        cfg = default_cohort_config(seed=1)
        assert cfg.n_per_group == {"tAD": 144, "atAD": 87, "nonAD": 137, "CN": 421}
        records, truth = generate_cohort(cfg)
        assert len(records) == 144 + 87 + 137 + 421
        assert truth.contrasts["atAD_vs_nonAD"]
        # full MRI panel present, including the derived total
        assert len(records[0].mri) == 207
        assert records[0].mri["total_hippocampus_volume"] == pytest.approx(
            records[0].mri["lh_hippocampus_volume"]
            + records[0].mri["rh_hippocampus_volume"])
