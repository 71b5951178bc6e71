"""Longitudinal patient documents: ingest, specialty routing, date cutoffs.

Documents arrive as newline-delimited JSON records (``corpus-v1``) with the
fields ``doc_id``, ``patient_id``, ``note_type``, ``created_date`` (ISO-8601
date), and ``text``.  Every document is routed to exactly one of six care-team
specialties by case-insensitive keyword matching on its note type, or dropped
when its type matches an excluded category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import ConflictError, IngestError, NotFoundError, ValidationError

INGEST_FORMAT = "corpus-v1"


class Specialty(str, Enum):
    PATHOLOGY = "pathology"
    RADIOLOGY = "radiology"
    SURGICAL_ONCOLOGY = "surgical_oncology"
    MEDICAL_ONCOLOGY = "medical_oncology"
    RADIATION_ONCOLOGY = "radiation_oncology"
    GENERAL_MEDICINE = "general_medicine"


@dataclass(frozen=True)
class PatientDocument:
    doc_id: str
    patient_id: str
    note_type: str
    created_date: date
    text: str


@dataclass(frozen=True)
class SpecialtyRouting:
    """Keyword-based note-type routing.

    Specialties are checked in declared order and the first keyword match
    wins (case-insensitive substring of the note type).  General medicine
    carries no keywords: it is the fallback for unmatched documents.
    Documents whose type matches an excluded keyword are dropped entirely.
    """

    keyword_map: tuple[tuple[Specialty, tuple[str, ...]], ...]
    excluded_keywords: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen: dict[str, Specialty] = {}
        for specialty, keywords in self.keyword_map:
            if specialty is Specialty.GENERAL_MEDICINE and keywords:
                raise ValidationError("general_medicine is the fallback and takes no keywords")
            for kw in keywords:
                low = kw.lower()
                if low in seen:
                    raise ValidationError(
                        f"keyword {kw!r} assigned to both {seen[low].value} and {specialty.value}")
                seen[low] = specialty


def default_routing() -> SpecialtyRouting:
    """Default note-type keyword map; deployments override via config."""
    return SpecialtyRouting(
        keyword_map=(
            (Specialty.PATHOLOGY, ("patholog",)),
            (Specialty.RADIOLOGY, ("radiolog", "imaging")),
            (Specialty.SURGICAL_ONCOLOGY, ("surg", "operative")),
            (Specialty.MEDICAL_ONCOLOGY, ("medical oncolog", "chemo", "infusion")),
            (Specialty.RADIATION_ONCOLOGY, ("radiation", "rt")),
        ),
        excluded_keywords=("nursing", "rehabilitation", "survivorship"),
    )


def routing_from_config(cfg: Mapping) -> SpecialtyRouting:
    """Build routing from a config mapping {specialty: [keywords]}."""
    keyword_map = tuple(
        (Specialty(name), tuple(words)) for name, words in cfg.get("keywords", {}).items()
    )
    return SpecialtyRouting(keyword_map=keyword_map,
                            excluded_keywords=tuple(cfg.get("excluded", ())))


def assign_specialty(doc: PatientDocument,
                     routing: SpecialtyRouting) -> Optional[Specialty]:
    """Route one document; None means the document is dropped."""
    note_type = doc.note_type.lower()
    for kw in routing.excluded_keywords:
        if kw.lower() in note_type:
            return None
    for specialty, keywords in routing.keyword_map:
        for kw in keywords:
            if kw.lower() in note_type:
                return specialty
    return Specialty.GENERAL_MEDICINE


class DocumentCorpus:
    """Patient-indexed document collection, immutable after ingest."""

    def __init__(self) -> None:
        self._by_patient: dict[str, list[PatientDocument]] = {}

    def _add(self, doc: PatientDocument) -> None:
        docs = self._by_patient.setdefault(doc.patient_id, [])
        if any(d.doc_id == doc.doc_id for d in docs):
            raise ConflictError(
                f"duplicate doc_id {doc.doc_id!r} for patient {doc.patient_id!r}")
        docs.append(doc)

    @classmethod
    def from_documents(cls, docs: Iterable[PatientDocument]) -> "DocumentCorpus":
        corpus = cls()
        for doc in docs:
            corpus._add(doc)
        return corpus

    @property
    def patient_ids(self) -> list[str]:
        return sorted(self._by_patient)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_patient.values())

    def __contains__(self, patient_id: str) -> bool:
        return patient_id in self._by_patient

    def documents(self, patient_id: str) -> list[PatientDocument]:
        if patient_id not in self._by_patient:
            raise NotFoundError(f"unknown patient {patient_id!r}")
        return list(self._by_patient[patient_id])

    def all_documents(self) -> Iterator[PatientDocument]:
        for pid in sorted(self._by_patient):
            yield from self._by_patient[pid]


_REQUIRED_FIELDS = ("doc_id", "patient_id", "note_type", "created_date", "text")


def _record_to_document(record: Mapping, index: int) -> PatientDocument:
    for f in _REQUIRED_FIELDS:
        if f not in record or record[f] is None:
            raise IngestError(index, f"missing field {f!r}")
    raw_date = record["created_date"]
    try:
        created = raw_date if isinstance(raw_date, date) else date.fromisoformat(str(raw_date))
    except ValueError:
        raise IngestError(index, f"invalid created_date {raw_date!r} (expected ISO-8601 date)")
    return PatientDocument(
        doc_id=str(record["doc_id"]),
        patient_id=str(record["patient_id"]),
        note_type=str(record["note_type"]),
        created_date=created,
        text=str(record["text"]),
    )


def ingest(records: Iterable[Mapping]) -> DocumentCorpus:
    """Build a corpus from record mappings, validating each one.

    Raises IngestError naming the zero-based record index on any invalid
    record, and ConflictError on duplicate per-patient doc ids.
    """
    corpus = DocumentCorpus()
    for index, record in enumerate(records):
        corpus._add(_record_to_document(record, index))
    return corpus


def ingest_jsonl(path: str | Path) -> DocumentCorpus:
    """Ingest a corpus-v1 newline-delimited JSON file."""
    def gen() -> Iterator[Mapping]:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestError(lineno, f"invalid JSON: {exc}")
    return ingest(gen())


def document_to_record(doc: PatientDocument) -> dict:
    return {
        "doc_id": doc.doc_id,
        "patient_id": doc.patient_id,
        "note_type": doc.note_type,
        "created_date": doc.created_date.isoformat(),
        "text": doc.text,
    }


def write_jsonl(corpus: DocumentCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.all_documents():
            fh.write(json.dumps(document_to_record(doc), sort_keys=True) + "\n")


def filter_by_cutoff(corpus: DocumentCorpus, patient_id: str,
                     cutoff_date: date) -> list[PatientDocument]:
    """Documents created strictly before the determination date.

    Documents on or after the cutoff are excluded to avoid information
    leakage from the determination itself.
    """
    return [d for d in corpus.documents(patient_id) if d.created_date < cutoff_date]


@dataclass(frozen=True)
class CorpusStats:
    document_count: int
    token_count: int
    patient_count: int
    mean_documents_per_patient: float
    mean_tokens_per_patient: float


def corpus_stats(corpus: DocumentCorpus, tokenizer) -> CorpusStats:
    """Totals and per-patient means under the configured tokenizer."""
    doc_count = len(corpus)
    patients = corpus.patient_ids
    tokens = sum(len(tokenizer.encode(d.text)) for d in corpus.all_documents())
    n = len(patients)
    return CorpusStats(
        document_count=doc_count,
        token_count=tokens,
        patient_count=n,
        mean_documents_per_patient=doc_count / n if n else 0.0,
        mean_tokens_per_patient=tokens / n if n else 0.0,
    )
