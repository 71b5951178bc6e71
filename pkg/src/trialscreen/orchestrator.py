"""Per-criterion assessment workflow: route, consult experts, adjudicate.

For each patient a panel of specialty reviewers is assembled from whichever
document stores are nonempty.  Each criterion is routed to the relevant
panel members by a coordinator call, each routed expert answers from its own
retrieved record excerpts, and a principal-investigator call settles
disagreements.  Flagged criteria resolve without any model calls.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Mapping, Optional, Sequence

from .corpus import Specialty
from .errors import EmptyPanelError, ValidationError
from .gateway import ChatRequest, Gateway
from .kb import KBSnapshot
from .protocol import Criterion, CriterionStatus, Trial, resolve_flagged
from .vectorstore import (EmbeddedChunk, Embedder, RetrievalConfig, VectorStore,
                          build_union_store, search)

GENERALIST_LABEL = "generalist"

UNPARSEABLE_EXPLANATION = "unparseable model output"

_EXPERT_TEMPLATES = {
    Specialty.PATHOLOGY: "expert_pathology",
    Specialty.RADIOLOGY: "expert_radiology",
    Specialty.SURGICAL_ONCOLOGY: "expert_surgical_oncology",
    Specialty.MEDICAL_ONCOLOGY: "expert_medical_oncology",
    Specialty.RADIATION_ONCOLOGY: "expert_radiation_oncology",
    Specialty.GENERAL_MEDICINE: "expert_general_medicine",
}

_TEMPLATE_NAMES = tuple(_EXPERT_TEMPLATES.values()) + (
    "coordinator", "generalist", "adjudicator")


def load_template_set(set_id: str = "v1") -> dict[str, str]:
    root = resources.files("trialscreen") / "prompts" / set_id
    if not root.is_dir():
        raise ValidationError(f"unknown prompt template set {set_id!r}")
    return {name: (root / f"{name}.txt").read_text(encoding="utf-8").strip()
            for name in _TEMPLATE_NAMES}


class PanelMode(str, Enum):
    MULTI_EXPERT = "MultiExpert"
    SINGLE_EXPERT = "SingleExpert"


@dataclass(frozen=True)
class OrchestratorConfig:
    mode: PanelMode = PanelMode.MULTI_EXPERT
    retrieval: RetrievalConfig = RetrievalConfig()
    template_set: str = "v1"
    model_id: str = "screening-default"
    temperature: float = 0.0
    skip_pi_on_unanimity: bool = True
    skip_coordinator_on_single_member: bool = True
    max_workers: int = 1

    def __post_init__(self) -> None:
        if self.max_workers < 1:
            raise ValidationError("max_workers must be >= 1")


@dataclass(frozen=True, eq=False)
class PanelMember:
    """One reviewer: a specialty (None for the generalist) and its store."""
    specialty: Optional[Specialty]
    store: VectorStore
    template_id: str

    @property
    def label(self) -> str:
        return self.specialty.value if self.specialty else GENERALIST_LABEL

    @property
    def display_name(self) -> str:
        return self.label.replace("_", " ")


@dataclass(frozen=True, eq=False)
class ExpertPanel:
    patient_id: str
    members: tuple[PanelMember, ...]

    def labels(self) -> list[str]:
        return [m.label for m in self.members]

    def member(self, label: str) -> PanelMember:
        for m in self.members:
            if m.label == label:
                return m
        raise ValidationError(f"no panel member {label!r}")


@dataclass(frozen=True)
class EvidenceRef:
    """One record excerpt as it was shown to an expert."""
    doc_id: str
    note_type: str
    created_date: str
    chunk_index: int
    token_start: int
    token_end: int
    similarity: float
    text: str


@dataclass(frozen=True)
class ExpertOpinion:
    specialty: str
    status: CriterionStatus
    explanation: str
    evidence: tuple[EvidenceRef, ...]


@dataclass(frozen=True)
class CriterionAssessment:
    criterion_id: str
    kind: str
    final_status: CriterionStatus
    routed_specialties: tuple[str, ...]
    opinions: tuple[ExpertOpinion, ...]
    adjudication: str
    short_circuited: bool


def build_panel(stores: Mapping[Specialty, VectorStore],
                config: OrchestratorConfig,
                templates: Mapping[str, str]) -> ExpertPanel:
    """Panel membership is exactly the set of nonempty specialty stores.

    SingleExpert mode collapses everything into one generalist member whose
    store is the union of all the patient's chunks.
    """
    nonempty = {sp: st for sp, st in stores.items() if len(st)}
    if not nonempty:
        raise EmptyPanelError("patient has no documents in any specialty store")
    patient_ids = {st.patient_id for st in nonempty.values()}
    if len(patient_ids) > 1:
        raise ValidationError("panel stores span multiple patients")
    patient_id = patient_ids.pop()
    if config.mode is PanelMode.SINGLE_EXPERT:
        union = build_union_store(list(nonempty.values()))
        return ExpertPanel(patient_id=patient_id, members=(
            PanelMember(specialty=None, store=union, template_id="generalist"),))
    members = tuple(
        PanelMember(specialty=sp, store=nonempty[sp],
                    template_id=_EXPERT_TEMPLATES[sp])
        for sp in sorted(nonempty, key=lambda s: s.value))
    return ExpertPanel(patient_id=patient_id, members=members)


# ---------------------------------------------------------------------------
# Output parsing

_DETERMINATION_RE = re.compile(
    r"^determination\s*[:\-]\s*(met|not\s+met|unable\s+to\s+determine)\s*\.?\s*$",
    re.IGNORECASE)

_STATUS_BY_PHRASE = {
    "met": CriterionStatus.MET,
    "not met": CriterionStatus.NOT_MET,
    "unable to determine": CriterionStatus.UNABLE_TO_DETERMINE,
}

_SPECIALTY_ALIASES: dict[str, Specialty] = {}
for _sp in Specialty:
    _base = _sp.value.replace("_", " ")
    _SPECIALTY_ALIASES[_base] = _sp
for _alias, _sp in [
    ("pathologist", Specialty.PATHOLOGY),
    ("radiologist", Specialty.RADIOLOGY),
    ("surgical oncologist", Specialty.SURGICAL_ONCOLOGY),
    ("surgery", Specialty.SURGICAL_ONCOLOGY),
    ("medical oncologist", Specialty.MEDICAL_ONCOLOGY),
    ("radiation oncologist", Specialty.RADIATION_ONCOLOGY),
    ("general internist", Specialty.GENERAL_MEDICINE),
    ("internal medicine", Specialty.GENERAL_MEDICINE),
    ("general practitioner", Specialty.GENERAL_MEDICINE),
]:
    _SPECIALTY_ALIASES[_alias] = _sp


def _final_line(text: str) -> str:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    return lines[-1] if lines else ""


def parse_determination(text: str) -> Optional[CriterionStatus]:
    """Read the terminal determination line; None when it is missing."""
    match = _DETERMINATION_RE.match(_final_line(text))
    if not match:
        return None
    phrase = re.sub(r"\s+", " ", match.group(1).lower())
    return _STATUS_BY_PHRASE[phrase]


def parse_specialties(text: str) -> Optional[set[Specialty]]:
    """Read specialty names from the coordinator's final line.

    Accepts an optional "Specialties:" prefix and common role synonyms
    ("pathologist" for pathology).  Returns None when nothing on the line is
    recognizable.
    """
    line = _final_line(text)
    line = re.sub(r"^specialties\s*[:\-]\s*", "", line, flags=re.IGNORECASE)
    found: set[Specialty] = set()
    for token in re.split(r",|;|/| and ", line):
        name = re.sub(r"[^a-z ]", " ", token.lower())
        name = re.sub(r"\s+", " ", name).strip()
        if not name:
            continue
        if name in _SPECIALTY_ALIASES:
            found.add(_SPECIALTY_ALIASES[name])
        elif name.endswith("s") and name[:-1] in _SPECIALTY_ALIASES:
            found.add(_SPECIALTY_ALIASES[name[:-1]])
    return found or None


RETRY_NUDGE = ("\n\nYour previous reply did not end with a valid final line. "
               "Answer again and end with exactly one line of the required form.")


# ---------------------------------------------------------------------------
# Orchestrator

class Orchestrator:
    """Runs the assessment workflow for one configuration.

    The orchestrator is stateless across patients; everything it needs per
    call is passed in, so one instance can serve a whole run.
    """

    def __init__(self, gateway: Gateway, embedder: Embedder,
                 config: OrchestratorConfig = OrchestratorConfig(),
                 kb_snapshot: Optional[KBSnapshot] = None,
                 templates: Optional[Mapping[str, str]] = None):
        self.gateway = gateway
        self.embedder = embedder
        self.config = config
        self.kb_snapshot = kb_snapshot
        self.templates = dict(templates) if templates is not None \
            else load_template_set(config.template_set)

    # -- prompt assembly ----------------------------------------------------

    def _expert_system_prompt(self, member: PanelMember) -> str:
        base = self.templates[member.template_id]
        if self.kb_snapshot and self.kb_snapshot.entries:
            return (base + "\n\nReviewer guidance from previously corrected cases:\n"
                    + self.kb_snapshot.render_for_prompt())
        return base

    def _criterion_block(self, trial: Trial, criterion: Criterion,
                         patient_id: str) -> str:
        return (f"Patient: {patient_id}\n"
                f"Trial: {trial.id}\n"
                f"Criterion {criterion.id} ({criterion.kind.value}): "
                f"{criterion.text}")

    def _expert_user_prompt(self, trial: Trial, criterion: Criterion,
                            patient_id: str,
                            evidence: Sequence[EvidenceRef]) -> str:
        lines = [self._criterion_block(trial, criterion, patient_id), "",
                 "Record excerpts:"]
        if evidence:
            for i, ref in enumerate(evidence, start=1):
                lines.append(f"[{i}] {ref.note_type} | {ref.created_date} | "
                             f"{ref.doc_id}#{ref.chunk_index}")
                lines.append(ref.text)
        else:
            lines.append("(none retrieved)")
        return "\n".join(lines)

    def _coordinator_user_prompt(self, trial: Trial, criterion: Criterion,
                                 panel: ExpertPanel) -> str:
        available = ", ".join(m.display_name for m in panel.members)
        return (self._criterion_block(trial, criterion, panel.patient_id)
                + f"\n\nAvailable specialists: {available}")

    def _adjudicator_user_prompt(self, trial: Trial, criterion: Criterion,
                                 patient_id: str,
                                 opinions: Sequence[ExpertOpinion]) -> str:
        lines = [self._criterion_block(trial, criterion, patient_id), "",
                 "Specialist assessments:"]
        for op in opinions:
            lines.append(f"--- {op.specialty.replace('_', ' ')} "
                         f"(Determination: {op.status.display})")
            lines.append(op.explanation)
        return "\n".join(lines)

    def _ask(self, system: str, user: str, role: str) -> str:
        request = ChatRequest(system_prompt=system, user_prompt=user,
                              model_id=self.config.model_id,
                              temperature=self.config.temperature)
        return self.gateway.complete(request, role=role).text

    # -- workflow steps -----------------------------------------------------

    def route_criterion(self, trial: Trial, criterion: Criterion,
                        panel: ExpertPanel) -> list[PanelMember]:
        """Pick the routed subset of the panel for one criterion.

        Falls back to the whole panel when the coordinator's answer is
        unparseable twice or names no member of this panel.  A one-member
        panel routes to that member without a call (the outcome could not
        differ) unless configured otherwise.
        """
        if len(panel.members) == 1 and self.config.skip_coordinator_on_single_member:
            return list(panel.members)
        system = self.templates["coordinator"]
        user = self._coordinator_user_prompt(trial, criterion, panel)
        by_specialty = {m.specialty: m for m in panel.members if m.specialty}
        for attempt in range(2):
            reply = self._ask(system, user if attempt == 0 else user + RETRY_NUDGE,
                              role="coordinator")
            parsed = parse_specialties(reply)
            if parsed:
                routed = [by_specialty[sp] for sp in sorted(parsed, key=lambda s: s.value)
                          if sp in by_specialty]
                if routed:
                    return routed
        return list(panel.members)

    def _retrieve(self, member: PanelMember, criterion: Criterion) -> list[EvidenceRef]:
        query = self.embedder.embed_texts([criterion.text])[0]
        hits = search(member.store, query, self.config.retrieval)
        return [EvidenceRef(doc_id=c.doc_id, note_type=c.note_type,
                            created_date=c.created_date.isoformat(),
                            chunk_index=c.chunk_index, token_start=c.token_start,
                            token_end=c.token_end, similarity=sim, text=c.text)
                for c, sim in hits]

    def assess_with_expert(self, trial: Trial, criterion: Criterion,
                           member: PanelMember, patient_id: str) -> ExpertOpinion:
        evidence = self._retrieve(member, criterion)
        system = self._expert_system_prompt(member)
        user = self._expert_user_prompt(trial, criterion, patient_id, evidence)
        reply = self._ask(system, user, role=f"expert:{member.label}")
        status = parse_determination(reply)
        if status is None:
            reply = self._ask(system, user + RETRY_NUDGE, role=f"expert:{member.label}")
            status = parse_determination(reply)
        if status is None:
            return ExpertOpinion(specialty=member.label,
                                 status=CriterionStatus.UNABLE_TO_DETERMINE,
                                 explanation=UNPARSEABLE_EXPLANATION,
                                 evidence=tuple(evidence))
        return ExpertOpinion(specialty=member.label, status=status,
                             explanation=reply, evidence=tuple(evidence))

    def adjudicate(self, trial: Trial, criterion: Criterion, patient_id: str,
                   opinions: Sequence[ExpertOpinion],
                   routed: Sequence[str]) -> CriterionAssessment:
        if not opinions:
            raise ValidationError("adjudication requires at least one opinion")
        statuses = {op.status for op in opinions}
        if len(statuses) == 1 and self.config.skip_pi_on_unanimity:
            return CriterionAssessment(
                criterion_id=criterion.id, kind=criterion.kind.value,
                final_status=statuses.pop(), routed_specialties=tuple(routed),
                opinions=tuple(opinions),
                adjudication="unanimous panel; adjudication not required",
                short_circuited=False)
        system = self.templates["adjudicator"]
        user = self._adjudicator_user_prompt(trial, criterion, patient_id, opinions)
        reply = self._ask(system, user, role="adjudicator")
        status = parse_determination(reply)
        if status is None:
            reply = self._ask(system, user + RETRY_NUDGE, role="adjudicator")
            status = parse_determination(reply)
        if status is None:
            status = _majority_status(opinions)
            reply = ("adjudicator output unparseable; fell back to majority of "
                     "panel opinions")
        return CriterionAssessment(
            criterion_id=criterion.id, kind=criterion.kind.value,
            final_status=status, routed_specialties=tuple(routed),
            opinions=tuple(opinions), adjudication=reply, short_circuited=False)

    def assess_criterion(self, trial: Trial, criterion: Criterion,
                         panel: ExpertPanel) -> CriterionAssessment:
        predetermined = resolve_flagged(criterion)
        if predetermined is not None:
            return CriterionAssessment(
                criterion_id=criterion.id, kind=criterion.kind.value,
                final_status=predetermined, routed_specialties=(),
                opinions=(),
                adjudication=f"resolved by criterion flag {criterion.flag.value}",
                short_circuited=True)
        routed = self.route_criterion(trial, criterion, panel)
        opinions = [self.assess_with_expert(trial, criterion, member, panel.patient_id)
                    for member in routed]
        return self.adjudicate(trial, criterion, panel.patient_id, opinions,
                               [m.label for m in routed])

    def assess_trial(self, trial: Trial,
                     stores: Mapping[Specialty, VectorStore]) -> list[CriterionAssessment]:
        """One assessment per criterion, in protocol order, single pass."""
        panel = build_panel(stores, self.config, self.templates)
        criteria = trial.criteria
        if self.config.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.max_workers) as pool:
                futures = [pool.submit(self.assess_criterion, trial, c, panel)
                           for c in criteria]
                return [f.result() for f in futures]
        return [self.assess_criterion(trial, c, panel) for c in criteria]


def _majority_status(opinions: Sequence[ExpertOpinion]) -> CriterionStatus:
    counts: dict[CriterionStatus, int] = {}
    for op in opinions:
        counts[op.status] = counts.get(op.status, 0) + 1
    best = max(counts.values())
    leaders = [s for s, n in counts.items() if n == best]
    if len(leaders) == 1:
        return leaders[0]
    return CriterionStatus.UNABLE_TO_DETERMINE


def statuses_from_assessments(
        assessments: Sequence[CriterionAssessment]) -> dict[str, CriterionStatus]:
    return {a.criterion_id: a.final_status for a in assessments}
