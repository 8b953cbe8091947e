"""Diagnostic group assignment from biomarker and clinical threshold rules.

Each subject lands in exactly one of tAD, atAD, nonAD, CN, or Excluded.
Every decision carries an ordered audit trail of the rules that fired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import IncompletePanelError, IncompleteRecordError, InvalidValueError
from .features import BiomarkerPanel, SubjectRecord

AMYLOID_SUVR_CUTOFF = 1.48  # centiloid 22
TAU_SUVR_CUTOFF = 1.29  # temporal lobe
CSF_ABETA42_CUTOFF = 700.0  # pg/ml, positive strictly below
CSF_TTAU_CUTOFF = 400.0  # pg/ml, positive strictly above
CSF_PTAU_CUTOFF = 60.0  # pg/ml, positive strictly above
CERAD_POSITIVE = (2, 3)  # moderate or frequent plaques
BRAAK_CUTOFF = 3

# (min education, LM cutoff): amnestic iff LM strictly below the cutoff
# for the subject's education band.
LM_EDUCATION_BANDS = ((16, 9), (8, 5), (0, 3))


class Group(Enum):
    TAD = "tAD"
    ATAD = "atAD"
    NONAD = "nonAD"
    CN = "CN"
    EXCLUDED = "Excluded"


class BiomarkerStatus(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class GroupAssignment:
    group: Group
    exclusion_reason: Optional[str] = None
    fired_rules: tuple[tuple[str, bool], ...] = field(default=())

    def __post_init__(self):
        if self.group is Group.EXCLUDED and not self.exclusion_reason:
            raise InvalidValueError("Excluded assignment requires a reason")
        if self.group is not Group.EXCLUDED and not self.fired_rules:
            raise InvalidValueError("non-Excluded assignment requires fired rules")


def _check_finite(value: float, name: str) -> None:
    if value is None or not math.isfinite(value):
        raise InvalidValueError(f"{name} must be finite, got {value}")
    if value < 0:
        raise InvalidValueError(f"{name} must be nonnegative, got {value}")


def amyloid_pet_positive(suvr: float) -> bool:
    _check_finite(suvr, "amyloid SUVR")
    return suvr >= AMYLOID_SUVR_CUTOFF


def tau_pet_positive(suvr: float) -> bool:
    _check_finite(suvr, "tau SUVR")
    return suvr >= TAU_SUVR_CUTOFF


def csf_positive(abeta42: float, ttau: float, ptau: float) -> bool:
    """Full CSF panel rule; all three cutoffs are strict and required jointly."""
    if abeta42 is None or ttau is None or ptau is None:
        raise IncompletePanelError("CSF rule requires abeta42, ttau, and ptau")
    for v, name in ((abeta42, "csf_abeta42"), (ttau, "csf_ttau"), (ptau, "csf_ptau")):
        _check_finite(v, name)
    return abeta42 < CSF_ABETA42_CUTOFF and ttau > CSF_TTAU_CUTOFF and ptau > CSF_PTAU_CUTOFF


def neuropath_positive(cerad: int, braak: int) -> bool:
    if cerad not in (0, 1, 2, 3):
        raise InvalidValueError(f"cerad out of range: {cerad}")
    if braak not in range(7):
        raise InvalidValueError(f"braak out of range: {braak}")
    return cerad in CERAD_POSITIVE and braak >= BRAAK_CUTOFF


def lm_is_amnestic(lm_score: int, education_years: int) -> bool:
    """Education-banded Logical Memory cutoff; True marks an amnestic presentation."""
    if lm_score < 0 or education_years < 0:
        raise InvalidValueError("lm_score and education_years must be nonnegative")
    for min_edu, cutoff in LM_EDUCATION_BANDS:
        if education_years >= min_edu:
            return lm_score < cutoff
    raise AssertionError("unreachable: bands cover education >= 0")


def ad_biomarker_status(panel: BiomarkerPanel) -> BiomarkerStatus:
    """Combine PET, CSF, and neuropathology into one tri-state call.

    Any complete positive modality wins (the modalities are disjunctive
    evidence); Negative needs at least one complete modality with all
    complete modalities negative; nothing complete is Indeterminate.
    """
    results = []
    if panel.amyloid_suvr is not None and panel.tau_suvr is not None:
        results.append(amyloid_pet_positive(panel.amyloid_suvr)
                       and tau_pet_positive(panel.tau_suvr))
    if (panel.csf_abeta42 is not None and panel.csf_ttau is not None
            and panel.csf_ptau is not None):
        results.append(csf_positive(panel.csf_abeta42, panel.csf_ttau, panel.csf_ptau))
    if panel.cerad is not None and panel.braak is not None:
        results.append(neuropath_positive(panel.cerad, panel.braak))

    if not results:
        return BiomarkerStatus.INDETERMINATE
    if any(results):
        return BiomarkerStatus.POSITIVE
    return BiomarkerStatus.NEGATIVE


def assign_group(record: SubjectRecord) -> GroupAssignment:
    """Apply the full rules chain: exclusions, biomarker gate, amnestic split."""
    fired: list[tuple[str, bool]] = []

    fired.append(("no_tbi", not record.tbi))
    if record.tbi:
        return GroupAssignment(Group.EXCLUDED, exclusion_reason="tbi",
                               fired_rules=tuple(fired))

    status = ad_biomarker_status(record.panel)
    fired.append(("biomarker_positive", status is BiomarkerStatus.POSITIVE))
    if status is BiomarkerStatus.INDETERMINATE:
        return GroupAssignment(Group.EXCLUDED,
                               exclusion_reason="indeterminate-biomarkers",
                               fired_rules=tuple(fired))

    if status is BiomarkerStatus.POSITIVE:
        if record.presentation_override is not None:
            amnestic = record.presentation_override == "amnestic"
            fired.append(("presentation_override_amnestic", amnestic))
        else:
            if record.lm_score is None:
                raise IncompleteRecordError(
                    f"subject {record.subject_id}: biomarker-positive but no LM score")
            amnestic = lm_is_amnestic(record.lm_score, record.education_years)
            fired.append(("lm_amnestic", amnestic))
        group = Group.TAD if amnestic else Group.ATAD
        return GroupAssignment(group, fired_rules=tuple(fired))

    fired.append(("impairment_diagnosis", record.impairment_diagnosis))
    group = Group.NONAD if record.impairment_diagnosis else Group.CN
    return GroupAssignment(group, fired_rules=tuple(fired))
