"""Subject table data model, CSV ingestion, feature matrices, and imputation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .atlas import CORTICAL_FEATURES, MRI_FEATURES
from .errors import (DataError, InvalidValueError, SchemaError,
                     UnimputableColumnError)

MOCA_SUBSCORES = (
    "visuospatial_executive",
    "naming",
    "attention",
    "language",
    "abstraction",
    "memory",
    "orientation",
)

MOCA_SUBSCORE_MAX = {
    "visuospatial_executive": 5,
    "naming": 3,
    "attention": 6,
    "language": 3,
    "abstraction": 2,
    "memory": 5,
    "orientation": 6,
}


class FeatureSet(Enum):
    CLINICAL = "clinical"
    HIPPO_ONLY = "hippo"
    HIPPO_PLUS_CLINICAL = "hippo+clinical"
    MRI_ONLY = "mri"
    MRI_PLUS_CLINICAL = "mri+clinical"


@dataclass(frozen=True)
class CognitiveBattery:
    """Cognitive test totals and subscores; every field optional."""

    moca_total: Optional[float] = None
    moca_subscores: dict[str, float] = field(default_factory=dict)
    mmse_total: Optional[float] = None
    tmt_a: Optional[float] = None
    tmt_b: Optional[float] = None
    animal_fluency: Optional[float] = None
    bnt_total: Optional[float] = None


@dataclass(frozen=True)
class BiomarkerPanel:
    amyloid_suvr: Optional[float] = None
    tau_suvr: Optional[float] = None
    csf_abeta42: Optional[float] = None
    csf_ttau: Optional[float] = None
    csf_ptau: Optional[float] = None
    cerad: Optional[int] = None
    braak: Optional[int] = None

    def __post_init__(self):
        for name in ("amyloid_suvr", "tau_suvr", "csf_abeta42", "csf_ttau", "csf_ptau"):
            v = getattr(self, name)
            if v is not None and (not math.isfinite(v) or v < 0):
                raise InvalidValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.cerad is not None and self.cerad not in (0, 1, 2, 3):
            raise InvalidValueError(f"cerad must be in 0..3, got {self.cerad}")
        if self.braak is not None and self.braak not in range(7):
            raise InvalidValueError(f"braak must be in 0..6, got {self.braak}")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    age: float
    sex: str  # "M" or "F"
    education_years: int
    family_history: Optional[bool]
    tbi: bool
    lm_score: Optional[int]
    impairment_diagnosis: bool
    initial_clinician_dx: Optional[str]  # "AD" or "nonAD"
    battery: CognitiveBattery
    panel: BiomarkerPanel
    etiv: Optional[float]
    mri: dict[str, float]
    presentation_override: Optional[str] = None  # "amnestic" or "non-amnestic"

    def __post_init__(self):
        if not (0 <= self.age <= 130):
            raise InvalidValueError(f"age out of range: {self.age}")
        if self.sex not in ("M", "F"):
            raise InvalidValueError(f"sex must be M or F, got {self.sex!r}")
        if self.education_years < 0:
            raise InvalidValueError(f"education_years negative: {self.education_years}")
        if self.etiv is not None and self.etiv <= 0:
            raise InvalidValueError(f"etiv must be positive: {self.etiv}")
        for key in self.mri:
            if key not in _MRI_SET:
                raise SchemaError(f"unknown MRI feature name: {key!r}")


_MRI_SET = frozenset(MRI_FEATURES)

# Columns that feed the CLINICAL ablation arm, in output order.
CLINICAL_COLUMNS = (
    "age",
    "education_years",
    "family_history",
    "moca_total",
    *(f"moca_{s}" for s in MOCA_SUBSCORES),
    "mmse_total",
    "tmt_a_sec",
    "tmt_b_sec",
    "animal_fluency",
    "bnt_total",
)

DEMOGRAPHIC_COLUMNS = (
    "subject_id",
    "age",
    "sex",
    "education_years",
    "family_history",
    "tbi",
    "lm_score",
    "impairment_diagnosis",
    "initial_clinician_dx",
    "presentation_override",
)

BATTERY_COLUMNS = (
    "moca_total",
    *(f"moca_{s}" for s in MOCA_SUBSCORES),
    "mmse_total",
    "tmt_a_sec",
    "tmt_b_sec",
    "animal_fluency",
    "bnt_total",
)

BIOMARKER_COLUMNS = (
    "amyloid_suvr",
    "tau_suvr",
    "csf_abeta42",
    "csf_ttau",
    "csf_ptau",
    "cerad",
    "braak",
)

SUBJECT_CSV_COLUMNS = (
    DEMOGRAPHIC_COLUMNS + BATTERY_COLUMNS + BIOMARKER_COLUMNS + ("etiv",) + MRI_FEATURES
)


def _parse_float(raw: str, column: str, row: int, lo=None, hi=None, strict_lo=False):
    try:
        v = float(raw)
    except ValueError:
        raise SchemaError(f"row {row}: column {column!r} not numeric: {raw!r}")
    if not math.isfinite(v):
        raise InvalidValueError(f"row {row}: column {column!r} not finite: {raw!r}")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise InvalidValueError(f"row {row}: column {column!r} below range: {v}")
    if hi is not None and v > hi:
        raise InvalidValueError(f"row {row}: column {column!r} above range: {v}")
    return v


def _parse_int(raw: str, column: str, row: int, lo=None, hi=None):
    v = _parse_float(raw, column, row, lo, hi)
    if v != int(v):
        raise InvalidValueError(f"row {row}: column {column!r} must be integer: {raw!r}")
    return int(v)


def _parse_bool(raw: str, column: str, row: int) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true"):
        return True
    if low in ("0", "false"):
        return False
    raise InvalidValueError(f"row {row}: column {column!r} not boolean: {raw!r}")


# (lo, hi) ranges for bounded battery scores.
_BATTERY_RANGES = {
    "moca_total": (0, 30),
    "mmse_total": (0, 30),
    "bnt_total": (0, 60),
    "animal_fluency": (0, None),
}


def parse_subject_table(path) -> list[SubjectRecord]:
    """Parse a subject CSV into records; empty cells denote missing values.

    Unknown columns and duplicate subject ids are rejected.
    """
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        known = set(SUBJECT_CSV_COLUMNS)
        unknown = [c for c in reader.fieldnames if c not in known]
        if unknown:
            raise SchemaError(f"{path}: unknown columns: {unknown}")
        if "subject_id" not in reader.fieldnames:
            raise SchemaError(f"{path}: missing required column subject_id")

        records: list[SubjectRecord] = []
        seen: set[str] = set()
        for i, row in enumerate(reader, start=2):
            if any(v is None for v in row.values()) or None in row:
                raise SchemaError(f"{path} row {i}: field count differs from header")
            rec = _row_to_record(row, i)
            if rec.subject_id in seen:
                raise SchemaError(f"{path} row {i}: duplicate subject_id {rec.subject_id!r}")
            seen.add(rec.subject_id)
            records.append(rec)
    return records


def _row_to_record(row: dict[str, str], i: int) -> SubjectRecord:
    def cell(col):
        return row.get(col, "").strip()

    def opt(col, fn, *args, **kw):
        raw = cell(col)
        return None if raw == "" else fn(raw, col, i, *args, **kw)

    subject_id = cell("subject_id")
    if not subject_id:
        raise SchemaError(f"row {i}: empty subject_id")

    subs = {}
    for s in MOCA_SUBSCORES:
        v = opt(f"moca_{s}", _parse_float, 0, MOCA_SUBSCORE_MAX[s])
        if v is not None:
            subs[s] = v
    battery = CognitiveBattery(
        moca_total=opt("moca_total", _parse_float, *_BATTERY_RANGES["moca_total"]),
        moca_subscores=subs,
        mmse_total=opt("mmse_total", _parse_float, *_BATTERY_RANGES["mmse_total"]),
        tmt_a=opt("tmt_a_sec", _parse_float, 0, None, True),
        tmt_b=opt("tmt_b_sec", _parse_float, 0, None, True),
        animal_fluency=opt("animal_fluency", _parse_float, 0),
        bnt_total=opt("bnt_total", _parse_float, *_BATTERY_RANGES["bnt_total"]),
    )
    panel = BiomarkerPanel(
        amyloid_suvr=opt("amyloid_suvr", _parse_float, 0),
        tau_suvr=opt("tau_suvr", _parse_float, 0),
        csf_abeta42=opt("csf_abeta42", _parse_float, 0),
        csf_ttau=opt("csf_ttau", _parse_float, 0),
        csf_ptau=opt("csf_ptau", _parse_float, 0),
        cerad=opt("cerad", _parse_int, 0, 3),
        braak=opt("braak", _parse_int, 0, 6),
    )

    mri = {}
    for name in MRI_FEATURES:
        v = opt(name, _parse_float)
        if v is not None:
            mri[name] = v

    dx = cell("initial_clinician_dx") or None
    if dx is not None and dx not in ("AD", "nonAD"):
        raise InvalidValueError(f"row {i}: initial_clinician_dx must be AD or nonAD: {dx!r}")
    override = cell("presentation_override") or None
    if override is not None and override not in ("amnestic", "non-amnestic"):
        raise InvalidValueError(f"row {i}: bad presentation_override: {override!r}")

    fh_raw = cell("family_history")
    return SubjectRecord(
        subject_id=subject_id,
        age=_parse_float(cell("age"), "age", i, 0, 130),
        sex=cell("sex"),
        education_years=_parse_int(cell("education_years"), "education_years", i, 0),
        family_history=None if fh_raw == "" else _parse_bool(fh_raw, "family_history", i),
        tbi=_parse_bool(cell("tbi") or "0", "tbi", i),
        lm_score=opt("lm_score", _parse_int, 0),
        impairment_diagnosis=_parse_bool(cell("impairment_diagnosis") or "0",
                                         "impairment_diagnosis", i),
        initial_clinician_dx=dx,
        battery=battery,
        panel=panel,
        etiv=opt("etiv", _parse_float, 0, None, True),
        mri=mri,
        presentation_override=override,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_subject_table(records: Sequence[SubjectRecord], path) -> None:
    """Write records to CSV in the canonical column order (round-trip safe)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUBJECT_CSV_COLUMNS)
        for r in records:
            row = {
                "subject_id": r.subject_id,
                "age": r.age,
                "sex": r.sex,
                "education_years": r.education_years,
                "family_history": r.family_history,
                "tbi": r.tbi,
                "lm_score": r.lm_score,
                "impairment_diagnosis": r.impairment_diagnosis,
                "initial_clinician_dx": r.initial_clinician_dx,
                "presentation_override": r.presentation_override,
                "moca_total": r.battery.moca_total,
                "mmse_total": r.battery.mmse_total,
                "tmt_a_sec": r.battery.tmt_a,
                "tmt_b_sec": r.battery.tmt_b,
                "animal_fluency": r.battery.animal_fluency,
                "bnt_total": r.battery.bnt_total,
                "amyloid_suvr": r.panel.amyloid_suvr,
                "tau_suvr": r.panel.tau_suvr,
                "csf_abeta42": r.panel.csf_abeta42,
                "csf_ttau": r.panel.csf_ttau,
                "csf_ptau": r.panel.csf_ptau,
                "cerad": r.panel.cerad,
                "braak": r.panel.braak,
                "etiv": r.etiv,
            }
            for s in MOCA_SUBSCORES:
                row[f"moca_{s}"] = r.battery.moca_subscores.get(s)
            for name in MRI_FEATURES:
                row[name] = r.mri.get(name)
            writer.writerow([_fmt(row.get(c)) for c in SUBJECT_CSV_COLUMNS])


@dataclass
class FeatureMatrix:
    """Numeric grid with an explicit missingness mask; NaN only under the mask."""

    column_names: tuple[str, ...]
    values: np.ndarray
    missing_mask: np.ndarray
    row_ids: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        n, f = self.values.shape
        if self.missing_mask.shape != (n, f):
            raise SchemaError("missing_mask shape differs from values")
        if len(self.column_names) != f:
            raise SchemaError("column_names length differs from values width")
        if len(set(self.column_names)) != f:
            raise SchemaError("duplicate column names")
        if len(self.row_ids) != n:
            raise SchemaError("row_ids length differs from values height")
        if np.isnan(self.values[~self.missing_mask]).any():
            raise InvalidValueError("NaN outside missing_mask")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(
            column_names=self.column_names,
            values=self.values[rows].copy(),
            missing_mask=self.missing_mask[rows].copy(),
            row_ids=tuple(self.row_ids[int(i)] for i in rows),
        )

    def select(self, names: Iterable[str]) -> "FeatureMatrix":
        idx = [self.column_names.index(n) for n in names]
        return FeatureMatrix(
            column_names=tuple(self.column_names[j] for j in idx),
            values=self.values[:, idx].copy(),
            missing_mask=self.missing_mask[:, idx].copy(),
            row_ids=self.row_ids,
        )


def _record_value(r: SubjectRecord, column: str):
    if column == "age":
        return r.age
    if column == "education_years":
        return float(r.education_years)
    if column == "family_history":
        return None if r.family_history is None else float(r.family_history)
    if column == "moca_total":
        return r.battery.moca_total
    if column.startswith("moca_"):
        return r.battery.moca_subscores.get(column[len("moca_"):])
    if column == "mmse_total":
        return r.battery.mmse_total
    if column == "tmt_a_sec":
        return r.battery.tmt_a
    if column == "tmt_b_sec":
        return r.battery.tmt_b
    if column == "animal_fluency":
        return r.battery.animal_fluency
    if column == "bnt_total":
        return r.battery.bnt_total
    return r.mri.get(column)


def feature_set_columns(feature_set: FeatureSet) -> tuple[str, ...]:
    if feature_set is FeatureSet.CLINICAL:
        return CLINICAL_COLUMNS
    if feature_set is FeatureSet.HIPPO_ONLY:
        return ("total_hippocampus_volume",)
    if feature_set is FeatureSet.HIPPO_PLUS_CLINICAL:
        return ("total_hippocampus_volume",) + CLINICAL_COLUMNS
    if feature_set is FeatureSet.MRI_ONLY:
        return CORTICAL_FEATURES
    if feature_set is FeatureSet.MRI_PLUS_CLINICAL:
        return CORTICAL_FEATURES + CLINICAL_COLUMNS
    raise ValueError(feature_set)


def assemble_matrix(records: Sequence[SubjectRecord],
                    feature_set: FeatureSet) -> FeatureMatrix:
    """Build the ablation-arm feature matrix for the given set, row order preserved."""
    if not records:
        raise SchemaError("empty record list")
    columns = feature_set_columns(feature_set)
    n, f = len(records), len(columns)
    values = np.full((n, f), np.nan)
    for i, r in enumerate(records):
        for j, c in enumerate(columns):
            v = _record_value(r, c)
            if v is not None:
                values[i, j] = v
    mask = np.isnan(values)
    return FeatureMatrix(
        column_names=columns,
        values=values,
        missing_mask=mask,
        row_ids=tuple(r.subject_id for r in records),
    )


@dataclass(frozen=True)
class ImputerState:
    column_names: tuple[str, ...]
    medians: np.ndarray


def fit_imputer(train: FeatureMatrix) -> ImputerState:
    """Per-column medians from the training matrix only."""
    medians = np.empty(train.values.shape[1])
    for j, name in enumerate(train.column_names):
        col = train.values[:, j]
        observed = col[~train.missing_mask[:, j]]
        if observed.size == 0:
            raise UnimputableColumnError(f"column {name!r} has no observed training values")
        medians[j] = np.median(observed)
    return ImputerState(column_names=train.column_names, medians=medians)


def apply_imputer(state: ImputerState, m: FeatureMatrix) -> FeatureMatrix:
    """Fill missing cells with training medians; never reads statistics from m."""
    if state.column_names != m.column_names:
        raise SchemaError("imputer columns differ from matrix columns")
    values = m.values.copy()
    values[m.missing_mask] = np.broadcast_to(state.medians, values.shape)[m.missing_mask]
    return FeatureMatrix(
        column_names=m.column_names,
        values=values,
        missing_mask=np.zeros_like(m.missing_mask),
        row_ids=m.row_ids,
    )
