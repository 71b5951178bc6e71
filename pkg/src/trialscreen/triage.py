"""Human review triage over predicted-ineligible cases.

Predicted negatives with few disqualifying criteria are the likely mistakes
(one wrong criterion call flips the patient), so they are queued for human
review in ascending order of disqualifying count.  Reviewers confirm or
override at the criterion level; the patient-level determination is always
recomputed by the eligibility engine, never set directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .eligibility import Determination, EligibilityReport, determine
from .errors import IncompleteWorkflowError, StateError, ValidationError
from .kb import ErrorMode, KnowledgeBase
from .orchestrator import CriterionAssessment
from .protocol import CriterionStatus, Trial


class TriageState(str, Enum):
    PENDING = "Pending"
    CONFIRMED = "Confirmed"
    OVERRIDDEN = "Overridden"


class Provenance(str, Enum):
    AI_ACCEPTED_POSITIVE = "AIAccepted_Positive"
    AI_ACCEPTED_NEGATIVE = "AIAccepted_Negative"
    HUMAN_CONFIRMED = "HumanConfirmed"
    HUMAN_OVERRIDDEN = "HumanOverridden"


@dataclass(frozen=True)
class TriagePolicy:
    threshold: int = 2

    def __post_init__(self) -> None:
        if self.threshold < 1:
            raise ValidationError("threshold must be >= 1")


@dataclass(frozen=True)
class Override:
    criterion_id: str
    new_status: CriterionStatus
    note: str = ""
    error_mode: ErrorMode = ErrorMode.OTHER


@dataclass(frozen=True)
class TriageItem:
    patient_id: str
    trial_id: str
    report: EligibilityReport
    disqualifying_count: int
    state: TriageState = TriageState.PENDING
    overrides: tuple[Override, ...] = ()
    review_duration_s: Optional[float] = None
    reviewer_id: str = ""
    version: int = 0

    def __post_init__(self) -> None:
        if self.state is not TriageState.PENDING and self.review_duration_s is None:
            raise ValidationError("a decided item must record its review duration")
        if self.state is TriageState.OVERRIDDEN and not self.overrides:
            raise ValidationError("an overridden item must carry overrides")

    @property
    def key(self) -> tuple[str, str]:
        return (self.trial_id, self.patient_id)


@dataclass(frozen=True)
class WorkflowOutcome:
    patient_id: str
    trial_id: str
    final_determination: Determination
    provenance: Provenance


def select_for_review(reports: Sequence[EligibilityReport],
                      policy: TriagePolicy = TriagePolicy()) -> list[TriageItem]:
    """Queue = predicted negatives with 1..threshold disqualifying criteria.

    Sorted ascending by count so near-misses surface first; ties break by
    (trial_id, patient_id) for a stable queue.  Predicted positives never
    enter the queue.
    """
    queue = [TriageItem(patient_id=r.patient_id, trial_id=r.trial_id, report=r,
                        disqualifying_count=r.disqualifying_count)
             for r in reports
             if r.determination is Determination.NOT_ELIGIBLE
             and 1 <= r.disqualifying_count <= policy.threshold]
    queue.sort(key=lambda item: (item.disqualifying_count, item.trial_id,
                                 item.patient_id))
    return queue


def confirm(item: TriageItem, *, reviewer_id: str,
            review_duration_s: float) -> TriageItem:
    if item.state is not TriageState.PENDING:
        raise StateError(f"item {item.key} already {item.state.value}")
    return replace(item, state=TriageState.CONFIRMED, reviewer_id=reviewer_id,
                   review_duration_s=review_duration_s, version=item.version + 1)


def apply_override(item: TriageItem, trial: Trial, overrides: Sequence[Override],
                   kb: Optional[KnowledgeBase] = None, *, reviewer_id: str = "",
                   review_duration_s: float = 0.0) -> tuple[TriageItem, EligibilityReport]:
    """Replace AI statuses with the reviewer's and recompute the report.

    Each override carrying a note becomes a knowledge-base entry, so the
    correction feeds future runs.  The updated report keeps the full audit
    trail with only the overridden final statuses replaced.
    """
    if item.state is not TriageState.PENDING:
        raise StateError(f"item {item.key} already {item.state.value}")
    if not overrides:
        raise ValidationError("apply_override requires at least one override")
    if trial.id != item.trial_id:
        raise ValidationError("trial does not match the triage item")
    known = {c.id for c in trial.criteria}
    by_criterion: dict[str, Override] = {}
    for ov in overrides:
        if ov.criterion_id not in known:
            raise ValidationError(f"unknown criterion {ov.criterion_id!r}")
        if ov.criterion_id in by_criterion:
            raise ValidationError(f"duplicate override for {ov.criterion_id!r}")
        by_criterion[ov.criterion_id] = ov

    new_assessments: list[CriterionAssessment] = []
    for a in item.report.assessments:
        ov = by_criterion.get(a.criterion_id)
        if ov is None:
            new_assessments.append(a)
        else:
            new_assessments.append(replace(a, final_status=ov.new_status))
    updated = determine(trial, new_assessments, item.patient_id)

    if kb is not None:
        for ov in overrides:
            if ov.note.strip():
                kb.append(ov.note, ov.error_mode, trial_id=item.trial_id,
                          criterion_id=ov.criterion_id, author=reviewer_id)

    decided = replace(item, state=TriageState.OVERRIDDEN, report=updated,
                      overrides=tuple(overrides), reviewer_id=reviewer_id,
                      review_duration_s=review_duration_s, version=item.version + 1)
    return decided, updated


def finalize(reports: Sequence[EligibilityReport], decisions: Iterable[TriageItem],
             policy: TriagePolicy = TriagePolicy()) -> dict[tuple[str, str], WorkflowOutcome]:
    """Combine AI determinations with review decisions into final outcomes.

    Unqueued reports pass through with AI provenance; every queued item must
    arrive decided, and its (possibly overridden) determination wins.
    """
    decided: dict[tuple[str, str], TriageItem] = {}
    for item in decisions:
        if item.state is TriageState.PENDING:
            raise IncompleteWorkflowError(f"undecided queue item {item.key}")
        decided[item.key] = item
    queued_keys = {item.key for item in select_for_review(reports, policy)}
    missing = queued_keys - set(decided)
    if missing:
        raise IncompleteWorkflowError(
            f"{len(missing)} queued items lack decisions, e.g. {sorted(missing)[0]}")

    outcomes: dict[tuple[str, str], WorkflowOutcome] = {}
    for report in reports:
        key = (report.trial_id, report.patient_id)
        if key in queued_keys:
            item = decided[key]
            provenance = (Provenance.HUMAN_OVERRIDDEN
                          if item.state is TriageState.OVERRIDDEN
                          else Provenance.HUMAN_CONFIRMED)
            outcomes[key] = WorkflowOutcome(
                patient_id=report.patient_id, trial_id=report.trial_id,
                final_determination=item.report.determination,
                provenance=provenance)
        elif report.determination is Determination.POTENTIALLY_ELIGIBLE:
            outcomes[key] = WorkflowOutcome(
                patient_id=report.patient_id, trial_id=report.trial_id,
                final_determination=report.determination,
                provenance=Provenance.AI_ACCEPTED_POSITIVE)
        else:
            outcomes[key] = WorkflowOutcome(
                patient_id=report.patient_id, trial_id=report.trial_id,
                final_determination=report.determination,
                provenance=Provenance.AI_ACCEPTED_NEGATIVE)
    return outcomes


def review_fraction(reports: Sequence[EligibilityReport],
                    policy: TriagePolicy = TriagePolicy()) -> float:
    if not reports:
        raise ValidationError("review fraction undefined for zero reports")
    return len(select_for_review(reports, policy)) / len(reports)
