"""All-relevant feature selection with shadow features and binomial testing.

Each iteration re-permutes shadow copies of the surviving columns, fits a
class-weighted depth-bounded forest, and scores a hit for every real
feature whose importance strictly exceeds the chosen percentile of the
shadow importances. Hit counts are tested two-sidedly against
Binomial(iterations, 0.5) at a Bonferroni-corrected alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binom

from .atlas import parse_feature_name
from .cohort import Group
from .errors import ConfigError, DataError
from .features import FeatureMatrix
from .forest import CLASS_WEIGHT_INVERSE, HyperParams, fit_forest


class Decision(Enum):
    CONFIRMED = "Confirmed"
    TENTATIVE = "Tentative"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class BorutaConfig:
    alpha: float = 0.05
    percentile: float = 100.0
    max_iter: int = 1000
    two_step: bool = False
    n_trees: Optional[int] = None  # None -> auto heuristic
    max_depth: int = 5
    class_weighting: str = CLASS_WEIGHT_INVERSE
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must be in (0, 1): {self.alpha}")
        if not (0.0 < self.percentile <= 100.0):
            raise ConfigError(f"percentile must be in (0, 100]: {self.percentile}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0: {self.max_iter}")
        if self.two_step:
            raise ConfigError("two_step correction is not implemented; use False")


@dataclass
class BorutaResult:
    decisions: list[Decision]
    hits: np.ndarray
    iterations_run: int
    importance_history: np.ndarray  # (iterations, features); NaN once rejected


def auto_tree_count(n_design_columns: int) -> int:
    """Scale-aware tree count per iteration: max(128, ceil(10 * sqrt(columns)))."""
    return max(128, math.ceil(10.0 * math.sqrt(n_design_columns)))


def add_shadows(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Append an independently row-permuted copy of every column."""
    X = np.asarray(X, dtype=float)
    shadows = np.empty_like(X)
    n = X.shape[0]
    for j in range(X.shape[1]):
        shadows[:, j] = X[rng.permutation(n), j]
    return np.hstack([X, shadows])


MIN_SHADOWS = 5


def _shadow_design(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Like add_shadows, but pads to at least MIN_SHADOWS shadow columns so
    the shadow percentile stays a stable null reference late in the loop."""
    n, f = X.shape
    src = list(range(f))
    while len(src) < MIN_SHADOWS:
        src.append(src[len(src) % f])
    shadows = np.empty((n, len(src)))
    for k, j in enumerate(src):
        shadows[:, k] = X[rng.permutation(n), j]
    return np.hstack([X, shadows])


def boruta_run(X: np.ndarray, y, config: BorutaConfig) -> BorutaResult:
    """Iterate until every feature is decided or max_iter is reached."""
    X = np.asarray(X, dtype=float)
    if np.isnan(X).any():
        raise DataError("Boruta requires a fully observed matrix")
    n, n_features = X.shape
    decisions = [Decision.TENTATIVE] * n_features
    hits = np.zeros(n_features, dtype=int)
    history: list[np.ndarray] = []
    # Bonferroni over the original feature count, both directions, throughout.
    threshold_p = config.alpha / n_features
    rng = np.random.default_rng(np.random.SeedSequence([config.seed & 0xFFFFFFFF, 77]))

    it = 0
    while it < config.max_iter and any(d is Decision.TENTATIVE for d in decisions):
        active = np.array([d is not Decision.REJECTED for d in decisions])
        active_idx = np.flatnonzero(active)
        design = _shadow_design(X[:, active_idx], rng)
        n_trees = config.n_trees or auto_tree_count(design.shape[1])
        params = HyperParams(
            max_depth=config.max_depth,
            n_trees=n_trees,
            class_weighting=config.class_weighting,
            seed=int(np.random.SeedSequence([config.seed & 0xFFFFFFFF, 1, it])
                     .generate_state(1)[0]),
        )
        model = fit_forest(design, y, params)
        n_active = active_idx.size
        real_imp = model.importances[:n_active]
        shadow_imp = model.importances[n_active:]
        cut = np.percentile(shadow_imp, config.percentile)
        hits[active_idx[real_imp > cut]] += 1

        row = np.full(n_features, np.nan)
        row[active_idx] = real_imp
        history.append(row)
        it += 1

        for f in range(n_features):
            if decisions[f] is not Decision.TENTATIVE:
                continue
            # exact binomial tails under p = 0.5
            p_high = float(binom.sf(hits[f] - 1, it, 0.5))
            p_low = float(binom.cdf(hits[f], it, 0.5))
            if p_high <= threshold_p:
                decisions[f] = Decision.CONFIRMED
            elif p_low <= threshold_p:
                decisions[f] = Decision.REJECTED

    return BorutaResult(
        decisions=decisions,
        hits=hits,
        iterations_run=it,
        importance_history=(np.array(history) if history
                            else np.empty((0, n_features))),
    )


@dataclass(frozen=True)
class RegionFinding:
    region: str
    hemisphere: str
    measure: str
    feature_name: str
    mean_z: dict[str, float]  # group value -> mean z-score
    direction: str  # "decreased" / "increased" for the contrast's first group

    def __post_init__(self):
        if self.direction not in ("decreased", "increased"):
            raise DataError(f"bad direction: {self.direction!r}")


def significant_regions(result: BorutaResult, z: FeatureMatrix,
                        groups: Sequence[Group],
                        contrast: tuple[Group, Group]) -> list[RegionFinding]:
    """One finding per Confirmed feature, with per-group mean z and direction.

    Under the atrophy-positive z convention a higher mean z for the
    contrast's first group means a decreased feature value.
    """
    if len(result.decisions) != len(z.column_names):
        raise DataError("Boruta result and z matrix column counts differ")
    groups = list(groups)
    if len(groups) != z.n_rows:
        raise DataError("groups length differs from z matrix rows")
    group_arr = np.array([g.value for g in groups])
    findings: list[RegionFinding] = []
    for j, (name, decision) in enumerate(zip(z.column_names, result.decisions)):
        if decision is not Decision.CONFIRMED:
            continue
        hemi, region, measure = parse_feature_name(name)
        col = z.values[:, j]
        mean_z = {}
        for g in sorted({g.value for g in groups}):
            sel = (group_arr == g) & ~z.missing_mask[:, j]
            mean_z[g] = float(col[sel].mean()) if sel.any() else float("nan")
        diff = mean_z[contrast[0].value] - mean_z[contrast[1].value]
        findings.append(RegionFinding(
            region=region, hemisphere=hemi, measure=measure, feature_name=name,
            mean_z=mean_z,
            direction="decreased" if diff > 0 else "increased",
        ))
    return findings
