"""Desikan-Killiany region vocabulary and canonical MRI feature names."""

from __future__ import annotations

from .errors import SchemaError

# 34 cortical regions per hemisphere.
DK_REGIONS = (
    "bankssts",
    "caudalanteriorcingulate",
    "caudalmiddlefrontal",
    "cuneus",
    "entorhinal",
    "frontalpole",
    "fusiform",
    "inferiorparietal",
    "inferiortemporal",
    "insula",
    "isthmuscingulate",
    "lateraloccipital",
    "lateralorbitofrontal",
    "lingual",
    "medialorbitofrontal",
    "middletemporal",
    "paracentral",
    "parahippocampal",
    "parsopercularis",
    "parsorbitalis",
    "parstriangularis",
    "pericalcarine",
    "postcentral",
    "posteriorcingulate",
    "precentral",
    "precuneus",
    "rostralanteriorcingulate",
    "rostralmiddlefrontal",
    "superiorfrontal",
    "superiorparietal",
    "superiortemporal",
    "supramarginal",
    "temporalpole",
    "transversetemporal",
)

HEMISPHERES = ("lh", "rh")
MEASURES = ("volume", "thickness", "area")

# 34 regions x 2 hemispheres x 3 measures = 204 cortical features.
CORTICAL_FEATURES = tuple(
    f"{hemi}_{region}_{measure}"
    for hemi in HEMISPHERES
    for region in DK_REGIONS
    for measure in MEASURES
)

HIPPOCAMPUS_FEATURES = ("lh_hippocampus_volume", "rh_hippocampus_volume")
DERIVED_FEATURES = ("total_hippocampus_volume",)

# Everything the subject table may carry as an MRI column.
MRI_FEATURES = CORTICAL_FEATURES + HIPPOCAMPUS_FEATURES + DERIVED_FEATURES

# Region-level features usable for per-region findings (lh/rh resolvable).
REGION_FEATURES = CORTICAL_FEATURES + HIPPOCAMPUS_FEATURES

_REGION_VOCAB = frozenset(DK_REGIONS) | {"hippocampus"}


def parse_feature_name(name: str) -> tuple[str, str, str]:
    """Split a canonical feature name into (hemisphere, region, measure).

    Raises SchemaError for anything outside the canonical vocabulary,
    including the derived total_hippocampus_volume column.
    """
    parts = name.split("_")
    if len(parts) != 3:
        raise SchemaError(f"feature name not of form hemi_region_measure: {name!r}")
    hemi, region, measure = parts
    if hemi not in HEMISPHERES:
        raise SchemaError(f"unknown hemisphere in feature name: {name!r}")
    if region not in _REGION_VOCAB:
        raise SchemaError(f"unknown region in feature name: {name!r}")
    if measure not in MEASURES:
        raise SchemaError(f"unknown measure in feature name: {name!r}")
    if region == "hippocampus" and measure != "volume":
        raise SchemaError(f"hippocampus carries only a volume feature: {name!r}")
    return hemi, region, measure
