"""Synthetic cohort generator with planted ground truth.

CN features follow the same linear covariate structure the normalization
stage assumes; disease groups subtract planted deltas expressed in units of
the per-feature noise SD, so a planted delta of d shows up as a mean
atrophy-positive z-score of about +d after normalization. Biomarker panels
and LM scores are generated to be deterministically consistent with each
subject's group, closing the loop with the cohort rules engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .atlas import REGION_FEATURES
from .cohort import (AMYLOID_SUVR_CUTOFF, LM_EDUCATION_BANDS, TAU_SUVR_CUTOFF)
from .errors import ConfigError
from .features import (BiomarkerPanel, CognitiveBattery, MOCA_SUBSCORES,
                       MOCA_SUBSCORE_MAX, SubjectRecord)

GROUP_ORDER = ("tAD", "atAD", "nonAD", "CN")

# Positive/negative biomarker draws keep a 5% margin from the cutoffs so
# threshold-boundary behavior never decides a synthetic subject's group.
BIOMARKER_MARGIN = 0.05


@dataclass(frozen=True)
class GroupCognition:
    moca: tuple[float, float]
    mmse: tuple[float, float]
    tmt_a: tuple[float, float]
    tmt_b: tuple[float, float]
    animal_fluency: tuple[float, float]
    bnt: tuple[float, float]


@dataclass
class SynthConfig:
    n_per_group: dict[str, int]
    age_range: tuple[float, float]
    female_fraction: float
    tiv_mean: float
    tiv_sd: float
    baselines: dict[str, tuple[float, float, float, float]]  # alpha, b_age, b_sex, b_tiv
    noise_sd: dict[str, float]
    planted_effects: dict[str, dict[str, float]]  # group -> feature -> delta (SD units)
    cognition: dict[str, GroupCognition]
    clinician_ad_rate: dict[str, float] = field(default_factory=dict)
    boundary: bool = False
    seed: int = 0

    def __post_init__(self):
        valid = frozenset(REGION_FEATURES)
        for group, effects in self.planted_effects.items():
            if group not in GROUP_ORDER:
                raise ConfigError(f"unknown group in planted_effects: {group!r}")
            for name in effects:
                if name not in valid:
                    raise ConfigError(f"invalid planted feature name: {name!r}")
        for name, sd in self.noise_sd.items():
            if sd <= 0:
                raise ConfigError(f"noise_sd must be positive for {name!r}: {sd}")
        for group in self.n_per_group:
            if group not in GROUP_ORDER:
                raise ConfigError(f"unknown group: {group!r}")


@dataclass
class PlantedTruth:
    """Per ordered contrast, the informative features and their effect signs.

    Sign +1 means the first group of the contrast is more atrophied on that
    feature (its planted delta is larger), -1 the reverse.
    """

    contrasts: dict[str, dict[str, int]]


def contrast_key(a: str, b: str) -> str:
    return f"{a}_vs_{b}"


def planted_truth(config: SynthConfig) -> PlantedTruth:
    contrasts: dict[str, dict[str, int]] = {}
    for a in GROUP_ORDER:
        for b in GROUP_ORDER:
            if a == b:
                continue
            da = config.planted_effects.get(a, {})
            db = config.planted_effects.get(b, {})
            diff: dict[str, int] = {}
            for name in sorted(set(da) | set(db)):
                delta = da.get(name, 0.0) - db.get(name, 0.0)
                if delta != 0.0:
                    diff[name] = 1 if delta > 0 else -1
            contrasts[contrast_key(a, b)] = diff
    return PlantedTruth(contrasts=contrasts)


def _lm_cutoff(education_years: int) -> int:
    for min_edu, cutoff in LM_EDUCATION_BANDS:
        if education_years >= min_edu:
            return cutoff
    raise AssertionError


def _battery(rng: np.random.Generator, cog: GroupCognition) -> CognitiveBattery:
    # MoCA subscores drawn per domain; the total is their sum by construction.
    target = float(np.clip(rng.normal(*cog.moca), 0.0, 30.0))
    p = target / 30.0
    subs = {s: float(rng.binomial(MOCA_SUBSCORE_MAX[s], p)) for s in MOCA_SUBSCORES}
    return CognitiveBattery(
        moca_total=float(sum(subs.values())),
        moca_subscores=subs,
        mmse_total=float(np.clip(round(rng.normal(*cog.mmse)), 0, 30)),
        tmt_a=float(np.clip(rng.normal(*cog.tmt_a), 10.0, 300.0)),
        tmt_b=float(np.clip(rng.normal(*cog.tmt_b), 20.0, 600.0)),
        animal_fluency=float(max(0, round(rng.normal(*cog.animal_fluency)))),
        bnt_total=float(np.clip(round(rng.normal(*cog.bnt)), 0, 60)),
    )


def _panel(rng: np.random.Generator, positive: bool, boundary: bool) -> BiomarkerPanel:
    if boundary:
        if positive:
            return BiomarkerPanel(amyloid_suvr=AMYLOID_SUVR_CUTOFF,
                                  tau_suvr=TAU_SUVR_CUTOFF)
        return BiomarkerPanel(amyloid_suvr=AMYLOID_SUVR_CUTOFF - 0.001,
                              tau_suvr=TAU_SUVR_CUTOFF - 0.001)
    if positive:
        return BiomarkerPanel(
            amyloid_suvr=float(rng.uniform(AMYLOID_SUVR_CUTOFF * (1 + BIOMARKER_MARGIN), 2.4)),
            tau_suvr=float(rng.uniform(TAU_SUVR_CUTOFF * (1 + BIOMARKER_MARGIN), 2.0)),
        )
    return BiomarkerPanel(
        amyloid_suvr=float(rng.uniform(0.9, AMYLOID_SUVR_CUTOFF * (1 - BIOMARKER_MARGIN))),
        tau_suvr=float(rng.uniform(0.9, TAU_SUVR_CUTOFF * (1 - BIOMARKER_MARGIN))),
    )


def generate_cohort(config: SynthConfig) -> tuple[list[SubjectRecord], PlantedTruth]:
    """Generate the cohort; deterministic for a given config.seed."""
    rng = np.random.default_rng(config.seed)
    feature_names = [n for n in REGION_FEATURES if n in config.baselines]
    records: list[SubjectRecord] = []

    for group in GROUP_ORDER:
        n = config.n_per_group.get(group, 0)
        if n == 0:
            continue
        biomarker_positive = group in ("tAD", "atAD")
        impaired = group != "CN"
        deltas = config.planted_effects.get(group, {})
        cog = config.cognition[group]
        ad_rate = config.clinician_ad_rate.get(group)

        ages = rng.uniform(*config.age_range, size=n)
        sexes = (rng.random(n) < config.female_fraction).astype(int)
        tivs = np.maximum(rng.normal(config.tiv_mean, config.tiv_sd, size=n), 1.0)
        noise = rng.standard_normal((n, len(feature_names)))

        for i in range(n):
            education = int(rng.integers(6, 21))
            cutoff = _lm_cutoff(education)
            if group == "tAD":
                lm = int(rng.integers(0, cutoff))
            elif group == "atAD":
                lm = int(rng.integers(cutoff, 25))
            else:
                lm = int(rng.integers(0, 25))

            if ad_rate is not None:
                dx = "AD" if rng.random() < ad_rate else "nonAD"
            elif impaired:
                dx = "nonAD"
            else:
                dx = None

            mri: dict[str, float] = {}
            for j, name in enumerate(feature_names):
                alpha, b_age, b_sex, b_tiv = config.baselines[name]
                sd = config.noise_sd[name]
                value = (alpha + b_age * ages[i] + b_sex * sexes[i]
                         + b_tiv * tivs[i] + sd * noise[i, j]
                         - deltas.get(name, 0.0) * sd)
                mri[name] = float(value)
            if "lh_hippocampus_volume" in mri and "rh_hippocampus_volume" in mri:
                mri["total_hippocampus_volume"] = (
                    mri["lh_hippocampus_volume"] + mri["rh_hippocampus_volume"])

            records.append(SubjectRecord(
                subject_id=f"{group}_{i:04d}",
                age=float(ages[i]),
                sex="F" if sexes[i] else "M",
                education_years=education,
                family_history=bool(rng.random() < (0.4 if biomarker_positive else 0.25)),
                tbi=False,
                lm_score=lm,
                impairment_diagnosis=impaired,
                initial_clinician_dx=dx,
                battery=_battery(rng, cog),
                panel=_panel(rng, biomarker_positive, config.boundary),
                etiv=float(tivs[i]),
                mri=mri,
            ))
    return records, planted_truth(config)


def _default_baselines(feature_names=REGION_FEATURES, seed: int = 20240501,
                       ) -> tuple[dict, dict]:
    """Plausible per-feature linear baselines, fixed by an internal seed."""
    rng = np.random.default_rng(seed)
    baselines: dict[str, tuple[float, float, float, float]] = {}
    noise_sd: dict[str, float] = {}
    for name in feature_names:
        measure = name.rsplit("_", 1)[1]
        if measure == "volume":
            baselines[name] = (float(rng.uniform(2000, 6000)),
                               float(rng.uniform(-8, -2)),
                               float(rng.uniform(-100, 100)),
                               float(rng.uniform(8e-4, 2e-3)))
            noise_sd[name] = float(rng.uniform(120, 300))
        elif measure == "thickness":
            baselines[name] = (float(rng.uniform(2.0, 3.2)),
                               float(rng.uniform(-0.008, -0.002)),
                               float(rng.uniform(-0.05, 0.05)),
                               float(rng.uniform(0.0, 2e-8)))
            noise_sd[name] = float(rng.uniform(0.08, 0.18))
        else:  # area
            baselines[name] = (float(rng.uniform(800, 2500)),
                               float(rng.uniform(-4, -1)),
                               float(rng.uniform(-50, 50)),
                               float(rng.uniform(3e-4, 8e-4)))
            noise_sd[name] = float(rng.uniform(60, 150))
    return baselines, noise_sd


def _both_hemis(region: str, measure: str, delta: float) -> dict[str, float]:
    return {f"lh_{region}_{measure}": delta, f"rh_{region}_{measure}": delta}


DEFAULT_COGNITION = {
    "CN": GroupCognition(moca=(27, 2), mmse=(29, 1.5), tmt_a=(35, 10),
                         tmt_b=(80, 25), animal_fluency=(21, 4), bnt=(55, 3)),
    "tAD": GroupCognition(moca=(18, 3), mmse=(22, 3), tmt_a=(60, 20),
                          tmt_b=(180, 60), animal_fluency=(12, 4), bnt=(45, 6)),
    "atAD": GroupCognition(moca=(20, 3), mmse=(23, 3), tmt_a=(70, 25),
                           tmt_b=(200, 70), animal_fluency=(13, 4), bnt=(42, 7)),
    "nonAD": GroupCognition(moca=(21, 3), mmse=(24, 3), tmt_a=(55, 20),
                            tmt_b=(160, 60), animal_fluency=(14, 4), bnt=(47, 6)),
}


def default_cohort_config(seed: int = 0) -> SynthConfig:
    """Cohort mirroring the larger public data set's group sizes, with
    hippocampal/temporal atrophy planted for tAD, posterior/parietal atrophy
    for atAD (hippocampus spared), and a distinct overlapping set for nonAD.
    """
    baselines, noise_sd = _default_baselines()

    tad: dict[str, float] = {}
    tad.update(_both_hemis("hippocampus", "volume", 3.0))
    tad.update(_both_hemis("entorhinal", "volume", 2.5))
    tad.update(_both_hemis("entorhinal", "thickness", 2.5))
    tad.update(_both_hemis("middletemporal", "volume", 2.0))
    tad.update(_both_hemis("inferiortemporal", "volume", 2.0))
    tad.update(_both_hemis("fusiform", "volume", 1.8))
    tad.update(_both_hemis("inferiorparietal", "thickness", 1.5))

    atad: dict[str, float] = {}
    atad.update(_both_hemis("precuneus", "volume", 3.0))
    atad.update(_both_hemis("precuneus", "thickness", 3.0))
    atad.update(_both_hemis("superiorparietal", "volume", 2.5))
    atad.update(_both_hemis("inferiorparietal", "volume", 2.5))
    atad.update(_both_hemis("supramarginal", "thickness", 2.0))
    atad.update(_both_hemis("postcentral", "volume", 2.0))
    atad.update(_both_hemis("lateraloccipital", "volume", 2.0))
    atad.update(_both_hemis("fusiform", "volume", 1.8))

    nonad: dict[str, float] = {}
    nonad.update(_both_hemis("hippocampus", "volume", 2.0))
    nonad.update(_both_hemis("lateralorbitofrontal", "volume", 2.5))
    nonad.update(_both_hemis("superiortemporal", "volume", 2.5))
    nonad.update(_both_hemis("parsopercularis", "thickness", 2.0))
    nonad.update(_both_hemis("insula", "volume", 2.0))

    return SynthConfig(
        n_per_group={"tAD": 144, "atAD": 87, "nonAD": 137, "CN": 421},
        age_range=(55.0, 90.0),
        female_fraction=0.5,
        tiv_mean=1_500_000.0,
        tiv_sd=120_000.0,
        baselines=baselines,
        noise_sd=noise_sd,
        planted_effects={"tAD": tad, "atAD": atad, "nonAD": nonad},
        cognition=DEFAULT_COGNITION,
        clinician_ad_rate={"tAD": 0.92, "atAD": 0.5},
        seed=seed,
    )
