"""Patient-level eligibility from per-criterion statuses.

The rule is conservative by construction: a patient is ruled out only by
affirmative evidence (an inclusion criterion found Not Met, or an exclusion
criterion found Met).  Undetermined criteria never disqualify, so missing
information can only keep a patient in the potentially-eligible pool; the
unable tally keeps that visible to reviewers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import IncompleteWorkflowError, ValidationError
from .orchestrator import CriterionAssessment
from .protocol import CriterionKind, CriterionStatus, Trial


class Determination(str, Enum):
    POTENTIALLY_ELIGIBLE = "PotentiallyEligible"
    NOT_ELIGIBLE = "NotEligible"


@dataclass(frozen=True)
class Tallies:
    """Banner counts: every criterion lands in exactly one bucket."""
    qualifying: int = 0
    disqualifying: int = 0
    unable: int = 0

    @property
    def total(self) -> int:
        return self.qualifying + self.disqualifying + self.unable


@dataclass(frozen=True)
class EligibilityReport:
    patient_id: str
    trial_id: str
    determination: Determination
    disqualifying_count: int
    tallies: Tallies
    assessments: tuple[CriterionAssessment, ...]


def is_disqualifying(kind: CriterionKind, status: CriterionStatus) -> bool:
    if status is CriterionStatus.UNABLE_TO_DETERMINE:
        return False
    if kind is CriterionKind.INCLUSION:
        return status is CriterionStatus.NOT_MET
    return status is CriterionStatus.MET


def status_map(assessments: Sequence[CriterionAssessment]) -> dict[str, CriterionStatus]:
    statuses: dict[str, CriterionStatus] = {}
    for a in assessments:
        if a.criterion_id in statuses:
            raise ValidationError(f"duplicate assessment for {a.criterion_id!r}")
        statuses[a.criterion_id] = a.final_status
    return statuses


def count_disqualifying(trial: Trial,
                        statuses: Mapping[str, CriterionStatus]) -> int:
    _require_complete(trial, statuses)
    return sum(1 for c in trial.criteria
               if is_disqualifying(c.kind, statuses[c.id]))


def tally(trial: Trial, statuses: Mapping[str, CriterionStatus]) -> Tallies:
    _require_complete(trial, statuses)
    qualifying = disqualifying = unable = 0
    for c in trial.criteria:
        status = statuses[c.id]
        if status is CriterionStatus.UNABLE_TO_DETERMINE:
            unable += 1
        elif is_disqualifying(c.kind, status):
            disqualifying += 1
        else:
            qualifying += 1
    return Tallies(qualifying=qualifying, disqualifying=disqualifying, unable=unable)


def determination_from_count(disqualifying_count: int) -> Determination:
    if disqualifying_count >= 1:
        return Determination.NOT_ELIGIBLE
    return Determination.POTENTIALLY_ELIGIBLE


def determine(trial: Trial, assessments: Sequence[CriterionAssessment],
              patient_id: str) -> EligibilityReport:
    """NotEligible iff at least one criterion status is disqualifying.

    A patient whose every criterion is Unable to Determine therefore stays
    PotentiallyEligible: absence of evidence is not grounds for exclusion.
    """
    statuses = status_map(assessments)
    tallies = tally(trial, statuses)
    return EligibilityReport(
        patient_id=patient_id, trial_id=trial.id,
        determination=determination_from_count(tallies.disqualifying),
        disqualifying_count=tallies.disqualifying, tallies=tallies,
        assessments=tuple(assessments))


def _require_complete(trial: Trial, statuses: Mapping[str, CriterionStatus]) -> None:
    wanted = {c.id for c in trial.criteria}
    got = set(statuses)
    missing = wanted - got
    if missing:
        raise IncompleteWorkflowError(
            f"missing status for {len(missing)} criteria, e.g. {sorted(missing)[0]!r}")
    extra = got - wanted
    if extra:
        raise ValidationError(
            f"status given for unknown criterion {sorted(extra)[0]!r}")
