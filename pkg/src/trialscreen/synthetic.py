"""Deterministic synthetic cohorts with scripted model behavior.

Real clinical records cannot ship with this package, so end-to-end behavior
is exercised on generated patients whose documents, ground-truth criterion
statuses, and scripted LLM replies are all derived from one seed.  Error
injection is explicit: chosen eligible pairs get wrong expert replies on one
or two criteria, producing workflow false negatives at low disqualifying
counts, and each injected error comes with a knowledge-base fix entry whose
marker flips the scripted backend back to the correct reply.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Optional, Sequence

from .eligibility import Determination
from .errors import ValidationError
from .evaluation import LabeledPair
from .gateway import ScriptRule
from .kb import ErrorMode, KnowledgeBase
from .protocol import (Criterion, CriterionFlag, CriterionKind, CriterionStatus,
                       MetastaticGroup, Trial, resolve_flagged)
from .triage import Override, TriageItem, apply_override, confirm

REPLY_TOKEN_TARGET = 18

_ERROR_MODE_CYCLE = (ErrorMode.DOMAIN_KNOWLEDGE, ErrorMode.LOGICAL,
                     ErrorMode.MISSING_INFORMATION, ErrorMode.IRRELEVANT_CRITERION)


def default_trials() -> tuple[Trial, Trial]:
    t1 = Trial(
        id="90-001", nct_id="NCT00000001",
        metastatic_group=MetastaticGroup.REQUIRED,
        criteria=(
            Criterion(id="inclusion criterion 1", kind=CriterionKind.INCLUSION,
                      text="Histologically confirmed invasive breast carcinoma."),
            Criterion(id="inclusion criterion 2", kind=CriterionKind.INCLUSION,
                      text="Measurable metastatic disease on imaging."),
            Criterion(id="inclusion criterion 3", kind=CriterionKind.INCLUSION,
                      text="ECOG performance status of 0 or 1."),
            Criterion(id="inclusion criterion 4", kind=CriterionKind.INCLUSION,
                      text="Willing to comply with scheduled study visits.",
                      flag=CriterionFlag.VACUOUS),
            Criterion(id="exclusion criterion 1", kind=CriterionKind.EXCLUSION,
                      text="Active second primary malignancy requiring treatment."),
            Criterion(id="exclusion criterion 2", kind=CriterionKind.EXCLUSION,
                      text="Uncontrolled intercurrent cardiac illness."),
            Criterion(id="exclusion criterion 3", kind=CriterionKind.EXCLUSION,
                      text="Any condition that in the investigator's judgment "
                           "precludes safe participation.",
                      flag=CriterionFlag.REQUIRES_HUMAN_REVIEW),
        ))
    t2 = Trial(
        id="90-002", nct_id="NCT00000002",
        metastatic_group=MetastaticGroup.EXCLUDED,
        criteria=(
            Criterion(id="inclusion criterion 1", kind=CriterionKind.INCLUSION,
                      text="Histologically confirmed carcinoma in situ without "
                           "invasive disease."),
            Criterion(id="inclusion criterion 2", kind=CriterionKind.INCLUSION,
                      text="No evidence of distant metastatic disease on staging."),
            Criterion(id="inclusion criterion 3", kind=CriterionKind.INCLUSION,
                      text="Adequate organ function on screening laboratories."),
            Criterion(id="inclusion criterion 4", kind=CriterionKind.INCLUSION,
                      text="Age 18 years or older at registration."),
            Criterion(id="inclusion criterion 5", kind=CriterionKind.INCLUSION,
                      text="Willing to comply with protocol procedures.",
                      flag=CriterionFlag.VACUOUS),
            Criterion(id="exclusion criterion 1", kind=CriterionKind.EXCLUSION,
                      text="Prior radiation therapy to the ipsilateral breast."),
            Criterion(id="exclusion criterion 2", kind=CriterionKind.EXCLUSION,
                      text="Pregnancy or active lactation at enrollment."),
            Criterion(id="exclusion criterion 3", kind=CriterionKind.EXCLUSION,
                      text="Unable to provide informed consent for any reason.",
                      flag=CriterionFlag.REQUIRES_HUMAN_REVIEW),
        ))
    return t1, t2


@dataclass(frozen=True)
class CohortSpec:
    trials: tuple[Trial, ...] = field(default_factory=default_trials)
    eligible_per_trial: int = 4
    ineligible_per_trial: int = 5
    error_rate: float = 0.0
    max_flips: int = 2

    def __post_init__(self) -> None:
        if not self.trials:
            raise ValidationError("cohort needs at least one trial")
        if self.eligible_per_trial < 0 or self.ineligible_per_trial < 0:
            raise ValidationError("patient counts must be >= 0")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValidationError("error_rate must lie in [0, 1]")
        if not 1 <= self.max_flips <= 2:
            raise ValidationError("max_flips must be 1 or 2")


@dataclass(frozen=True)
class InjectedError:
    trial_id: str
    patient_id: str
    criterion_id: str
    error_mode: ErrorMode
    kb_marker: str
    fix_text: str


@dataclass(frozen=True)
class SyntheticCohort:
    trials: tuple[Trial, ...]
    pairs: tuple[LabeledPair, ...]
    documents: tuple[dict, ...]
    truth: dict[tuple[str, str], dict[str, CriterionStatus]]
    rules: tuple[ScriptRule, ...]
    kb_entries: tuple[tuple[str, ErrorMode], ...]
    injected_errors: tuple[InjectedError, ...]

    def trial(self, trial_id: str) -> Trial:
        for t in self.trials:
            if t.id == trial_id:
                return t
        raise ValidationError(f"unknown trial {trial_id!r}")

    def seed_kb(self, kb: Optional[KnowledgeBase] = None) -> KnowledgeBase:
        kb = kb if kb is not None else KnowledgeBase()
        for text, mode in self.kb_entries:
            kb.append(text, mode, author="synthetic-fixture")
        return kb


def _qualifying_status(kind: CriterionKind) -> CriterionStatus:
    if kind is CriterionKind.INCLUSION:
        return CriterionStatus.MET
    return CriterionStatus.NOT_MET


def _disqualifying_status(kind: CriterionKind) -> CriterionStatus:
    if kind is CriterionKind.INCLUSION:
        return CriterionStatus.NOT_MET
    return CriterionStatus.MET


def _padded_reply(body: str, status: CriterionStatus) -> str:
    """Expert reply with a fixed whitespace-token count.

    Equal-length replies keep completion-token totals identical across runs
    that answer the same questions differently, so cost comparisons isolate
    prompt-side differences (the KB block).
    """
    reply = f"{body}\nDetermination: {status.display}"
    pad = REPLY_TOKEN_TARGET - len(reply.split())
    if pad < 0:
        raise ValidationError(f"reply body too long to pad: {body!r}")
    if pad:
        body = body + " " + " ".join(["Noted."] * pad)
    return f"{body}\nDetermination: {status.display}"


def _patient_documents(pid: str, trial: Trial, index: int) -> list[dict]:
    created = date(2021, 1 + index % 12, 1 + (index * 7) % 28)
    path_text = (f"Surgical pathology for patient {pid}. Specimen from the "
                 f"left breast shows the findings summarized for protocol "
                 f"{trial.id} screening. Margins and receptor panels are "
                 f"reported in full below. " + _filler(pid, "path"))
    rad_text = (f"Diagnostic imaging for patient {pid}. Cross-sectional "
                f"studies reviewed with comparison to priors; measurable "
                f"findings are described for staging. " + _filler(pid, "rad"))
    gen_text = (f"Clinic visit for patient {pid}. Interval history, "
                f"performance status, medications, and laboratory review "
                f"documented at this encounter. " + _filler(pid, "gen"))
    return [
        {"doc_id": f"{pid}-PATH", "patient_id": pid,
         "note_type": "Pathology Report",
         "created_date": created.isoformat(), "text": path_text},
        {"doc_id": f"{pid}-RAD", "patient_id": pid,
         "note_type": "Radiology Report",
         "created_date": created.isoformat(), "text": rad_text},
        {"doc_id": f"{pid}-GEN", "patient_id": pid,
         "note_type": "Progress Note",
         "created_date": created.isoformat(), "text": gen_text},
    ]


def _filler(pid: str, tag: str) -> str:
    rng = random.Random(f"{pid}:{tag}")
    words = ["stable", "unremarkable", "documented", "reviewed", "discussed",
             "confirmed", "ongoing", "baseline", "followup", "tolerated"]
    return " ".join(rng.choice(words) for _ in range(24)) + "."


def generate_synthetic_cohort(spec: CohortSpec, seed: int | str) -> SyntheticCohort:
    """Build the cohort, its labels, and the scripted-backend rule set.

    Rule order matters: the coordinator rule first (its marker only occurs
    in coordinator prompts), then knowledge-base fix rules (marker + patient
    + criterion), then one base rule per (patient, criterion) carrying the
    truthful or injected-wrong reply.
    """
    pairs: list[LabeledPair] = []
    documents: list[dict] = []
    truth: dict[tuple[str, str], dict[str, CriterionStatus]] = {}
    fix_rules: list[ScriptRule] = []
    base_rules: list[ScriptRule] = []
    kb_entries: list[tuple[str, ErrorMode]] = []
    injected: list[InjectedError] = []

    patient_seq = 0
    marker_seq = 0
    for trial in spec.trials:
        normal = [c for c in trial.criteria if c.flag is CriterionFlag.NORMAL]
        if not normal:
            raise ValidationError(f"trial {trial.id} has no assessable criteria")
        n_errors = round(spec.error_rate * spec.eligible_per_trial)
        for i in range(spec.eligible_per_trial + spec.ineligible_per_trial):
            patient_seq += 1
            pid = f"P{patient_seq:04d}"
            eligible = i < spec.eligible_per_trial
            documents.extend(_patient_documents(pid, trial, patient_seq))

            statuses: dict[str, CriterionStatus] = {}
            for c in trial.criteria:
                predetermined = resolve_flagged(c)
                statuses[c.id] = (predetermined if predetermined is not None
                                  else _qualifying_status(c.kind))
            if not eligible:
                k = i - spec.eligible_per_trial
                depth = 1 + k % min(5, len(normal))
                flip_rng = random.Random(f"{seed}:flip:{trial.id}:{pid}")
                for c in flip_rng.sample(normal, depth):
                    statuses[c.id] = _disqualifying_status(c.kind)
            truth[(trial.id, pid)] = statuses
            pairs.append(LabeledPair(
                patient_id=pid, trial_id=trial.id,
                label=(Determination.POTENTIALLY_ELIGIBLE if eligible
                       else Determination.NOT_ELIGIBLE),
                label_source="Original"))

            wrong_on: list[Criterion] = []
            if eligible and i < n_errors:
                flips = 1 + (i % spec.max_flips)
                err_rng = random.Random(f"{seed}:err:{trial.id}:{pid}")
                wrong_on = err_rng.sample(normal, min(flips, len(normal)))

            for c in normal:
                pid_frag = f"Patient: {pid}\n"
                crit_frag = f"Criterion {c.id} ("
                true_status = statuses[c.id]
                correct = _padded_reply(
                    "The retrieved excerpts settle this requirement for this "
                    "patient.", true_status)
                if c in wrong_on:
                    marker_seq += 1
                    marker = f"[kb-fix-{marker_seq}]"
                    mode = _ERROR_MODE_CYCLE[(marker_seq - 1) % len(_ERROR_MODE_CYCLE)]
                    fix_text = (f"{marker} For trial {trial.id}, {c.id}, patient "
                                f"{pid}: re-read the matching excerpt before "
                                f"deciding; the earlier assessment misread it.")
                    kb_entries.append((fix_text, mode))
                    injected.append(InjectedError(
                        trial_id=trial.id, patient_id=pid, criterion_id=c.id,
                        error_mode=mode, kb_marker=marker, fix_text=fix_text))
                    fix_rules.append(ScriptRule(
                        contains=(marker, pid_frag, crit_frag), reply=correct))
                    wrong = _padded_reply(
                        "The retrieved excerpts settle this requirement for this "
                        "patient.", _disqualifying_status(c.kind))
                    base_rules.append(ScriptRule(
                        contains=(pid_frag, crit_frag), reply=wrong))
                else:
                    base_rules.append(ScriptRule(
                        contains=(pid_frag, crit_frag), reply=correct))

    coordinator_rule = ScriptRule(contains=("Available specialists:",),
                                  reply="Specialties: pathology")
    rules = (coordinator_rule, *fix_rules, *base_rules)
    return SyntheticCohort(
        trials=tuple(spec.trials), pairs=tuple(pairs), documents=tuple(documents),
        truth=truth, rules=rules, kb_entries=tuple(kb_entries),
        injected_errors=tuple(injected))


def perfect_reviewer_decisions(
        queue: Sequence[TriageItem], cohort: SyntheticCohort,
        kb: Optional[KnowledgeBase] = None,
        reviewer_id: str = "sim-reviewer") -> list[TriageItem]:
    """Simulate a reviewer who always recovers the ground truth.

    Queue items whose patient is truly eligible get their wrong criterion
    statuses overridden back to truth (with the fix text as the feedback
    note); truly ineligible items are confirmed as-is.
    """
    fixes = {(e.trial_id, e.patient_id, e.criterion_id): e
             for e in cohort.injected_errors}
    decided: list[TriageItem] = []
    for n, item in enumerate(queue):
        trial = cohort.trial(item.trial_id)
        statuses = cohort.truth[(item.trial_id, item.patient_id)]
        truly_eligible = not any(
            _disqualifying_status(c.kind) is statuses[c.id]
            for c in trial.criteria if c.flag is CriterionFlag.NORMAL)
        duration = 30.0 + n
        if not truly_eligible:
            decided.append(confirm(item, reviewer_id=reviewer_id,
                                   review_duration_s=duration))
            continue
        overrides = []
        for a in item.report.assessments:
            if a.short_circuited or a.final_status is statuses[a.criterion_id]:
                continue
            err = fixes.get((item.trial_id, item.patient_id, a.criterion_id))
            note = err.fix_text if err else (
                f"Corrected {a.criterion_id} against the source record.")
            mode = err.error_mode if err else ErrorMode.OTHER
            overrides.append(Override(criterion_id=a.criterion_id,
                                      new_status=statuses[a.criterion_id],
                                      note=note, error_mode=mode))
        item, _ = apply_override(item, trial, overrides, kb,
                                 reviewer_id=reviewer_id,
                                 review_duration_s=duration)
        decided.append(item)
    return decided
