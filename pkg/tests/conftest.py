import numpy as np
import pytest

from atlasforest.synth import (DEFAULT_COGNITION, SynthConfig,
                               _default_baselines, generate_cohort)

SMALL_FEATURES = tuple(
    f"{h}_{r}_{m}"
    for h in ("lh", "rh")
    for r in ("precuneus", "superiorparietal", "entorhinal", "fusiform",
              "insula", "lateralorbitofrontal", "postcentral",
              "superiortemporal", "middletemporal", "cuneus")
    for m in ("volume", "thickness")
) + ("lh_hippocampus_volume", "rh_hippocampus_volume")


def small_config(seed=0, n_per_group=None, planted=None, boundary=False):
    baselines, noise_sd = _default_baselines(feature_names=SMALL_FEATURES)
    if planted is None:
        planted = {
            "tAD": {"lh_hippocampus_volume": 3.0, "rh_hippocampus_volume": 3.0,
                    "lh_entorhinal_volume": 2.5, "rh_entorhinal_volume": 2.5},
            "atAD": {"lh_precuneus_volume": 3.0, "rh_precuneus_volume": 3.0,
                     "lh_superiorparietal_volume": 2.5,
                     "rh_superiorparietal_volume": 2.5},
            "nonAD": {"lh_insula_volume": 2.5, "rh_insula_volume": 2.5,
                      "lh_hippocampus_volume": 2.0, "rh_hippocampus_volume": 2.0},
        }
    return SynthConfig(
        n_per_group=n_per_group or {"tAD": 30, "atAD": 30, "nonAD": 30, "CN": 60},
        age_range=(55.0, 90.0),
        female_fraction=0.5,
        tiv_mean=1_500_000.0,
        tiv_sd=120_000.0,
        baselines=baselines,
        noise_sd=noise_sd,
        planted_effects=planted,
        cognition=DEFAULT_COGNITION,
        clinician_ad_rate={"tAD": 0.9, "atAD": 0.5},
        boundary=boundary,
        seed=seed,
    )


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(small_config(seed=11))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(123)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines past output capture."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
