"""Canonical report documents for (patient, trial) assessments.

Reports are the audit trail: every expert opinion, the evidence excerpts
exactly as prompted, the adjudication, the configuration digest, and the KB
version used.  Serialization is canonical (sorted keys, fixed separators,
no timestamps) so identical runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .eligibility import Determination, EligibilityReport, Tallies
from .errors import ValidationError
from .orchestrator import CriterionAssessment, EvidenceRef, ExpertOpinion
from .protocol import CriterionStatus

REPORT_FORMAT = "eligibility-report-v1"


def canonical_json_bytes(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("utf-8")


def config_digest(config: Mapping) -> str:
    return hashlib.sha256(canonical_json_bytes(dict(config))).hexdigest()


def _evidence_to_record(ref: EvidenceRef) -> dict:
    return {
        "doc_id": ref.doc_id,
        "note_type": ref.note_type,
        "created_date": ref.created_date,
        "chunk_index": ref.chunk_index,
        "token_start": ref.token_start,
        "token_end": ref.token_end,
        "similarity": ref.similarity,
        "text": ref.text,
    }


def _opinion_to_record(op: ExpertOpinion) -> dict:
    return {
        "specialty": op.specialty,
        "status": op.status.value,
        "explanation": op.explanation,
        "evidence": [_evidence_to_record(e) for e in op.evidence],
    }


def _assessment_to_record(a: CriterionAssessment) -> dict:
    return {
        "criterion_id": a.criterion_id,
        "kind": a.kind,
        "final_status": a.final_status.value,
        "routed_specialties": list(a.routed_specialties),
        "opinions": [_opinion_to_record(op) for op in a.opinions],
        "adjudication": a.adjudication,
        "short_circuited": a.short_circuited,
    }


def report_to_payload(report: EligibilityReport, *, config_digest: str,
                      kb_version: int,
                      ledger_records: Optional[Sequence[Mapping]] = None) -> dict:
    return {
        "format": REPORT_FORMAT,
        "patient_id": report.patient_id,
        "trial_id": report.trial_id,
        "determination": report.determination.value,
        "disqualifying_count": report.disqualifying_count,
        "tallies": {
            "qualifying": report.tallies.qualifying,
            "disqualifying": report.tallies.disqualifying,
            "unable": report.tallies.unable,
        },
        "config_digest": config_digest,
        "kb_version": kb_version,
        "assessments": [_assessment_to_record(a) for a in report.assessments],
        "ledger": [dict(r) for r in (ledger_records or [])],
    }


def serialize_report(report: EligibilityReport, *, config_digest: str,
                     kb_version: int,
                     ledger_records: Optional[Sequence[Mapping]] = None) -> bytes:
    payload = report_to_payload(report, config_digest=config_digest,
                                kb_version=kb_version, ledger_records=ledger_records)
    return canonical_json_bytes(payload)


def _evidence_from_record(r: Mapping) -> EvidenceRef:
    return EvidenceRef(doc_id=r["doc_id"], note_type=r["note_type"],
                       created_date=r["created_date"], chunk_index=r["chunk_index"],
                       token_start=r["token_start"], token_end=r["token_end"],
                       similarity=r["similarity"], text=r["text"])


def _opinion_from_record(r: Mapping) -> ExpertOpinion:
    return ExpertOpinion(specialty=r["specialty"], status=CriterionStatus(r["status"]),
                         explanation=r["explanation"],
                         evidence=tuple(_evidence_from_record(e) for e in r["evidence"]))


def _assessment_from_record(r: Mapping) -> CriterionAssessment:
    return CriterionAssessment(
        criterion_id=r["criterion_id"], kind=r["kind"],
        final_status=CriterionStatus(r["final_status"]),
        routed_specialties=tuple(r["routed_specialties"]),
        opinions=tuple(_opinion_from_record(op) for op in r["opinions"]),
        adjudication=r["adjudication"], short_circuited=r["short_circuited"])


def report_from_payload(payload: Mapping) -> EligibilityReport:
    if payload.get("format") != REPORT_FORMAT:
        raise ValidationError(f"unsupported report format {payload.get('format')!r}")
    t = payload["tallies"]
    return EligibilityReport(
        patient_id=payload["patient_id"], trial_id=payload["trial_id"],
        determination=Determination(payload["determination"]),
        disqualifying_count=payload["disqualifying_count"],
        tallies=Tallies(qualifying=t["qualifying"], disqualifying=t["disqualifying"],
                        unable=t["unable"]),
        assessments=tuple(_assessment_from_record(a) for a in payload["assessments"]))


def load_report(path: str | Path) -> tuple[EligibilityReport, dict]:
    """Returns the report plus the raw payload (digests, ledger excerpt)."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return report_from_payload(payload), payload
