"""End-to-end run driver: stores, assessment, reports, persistence.

A run takes a corpus, a set of (patient, trial) pairs, and one immutable
configuration; it builds per-specialty vector stores for each patient,
assesses every pair through the orchestrator, and persists one canonical
report per pair plus a run-level ledger.  Reruns resume by skipping pairs
whose reports already exist.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Optional, Sequence

from .chunking import ChunkingConfig, DocumentChunk, chunk_document, load_tokenizer
from .corpus import (DocumentCorpus, Specialty, SpecialtyRouting, assign_specialty,
                     default_routing)
from .eligibility import EligibilityReport, determine
from .errors import EmptyPanelError, NotFoundError, TrialScreenError
from .gateway import Backend, CostLedger, Gateway, PriceTable
from .kb import KBSnapshot, KnowledgeBase
from .orchestrator import Orchestrator, OrchestratorConfig, PanelMode
from .protocol import Trial
from .reports import canonical_json_bytes, config_digest, serialize_report
from .storage import KeyValueStore
from .vectorstore import HashEmbedder, RetrievalConfig, VectorStore, build_store


@dataclass(frozen=True)
class RunConfig:
    """Everything that identifies a run, hashed into the report digests."""

    mode: str = "multi"  # "multi" or "single"
    backend: str = "scripted"  # "scripted", "replay", or "live"
    model_id: str = "screening-default"
    temperature: float = 0.0
    template_set: str = "v1"
    tokenizer: str = "whitespace"
    chunk_tokens: int = 500
    overlap_tokens: int = 50
    embedding_dim: int = 64
    retrieval_k: int = 10
    use_kb: bool = False
    max_workers: int = 1

    def to_payload(self) -> dict:
        return {
            "mode": self.mode,
            "backend": self.backend,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "template_set": self.template_set,
            "tokenizer": self.tokenizer,
            "chunk_tokens": self.chunk_tokens,
            "overlap_tokens": self.overlap_tokens,
            "embedding_dim": self.embedding_dim,
            "retrieval_k": self.retrieval_k,
            "use_kb": self.use_kb,
            "max_workers": self.max_workers,
        }

    def digest(self) -> str:
        return config_digest(self.to_payload())

    def orchestrator_config(self) -> OrchestratorConfig:
        mode = PanelMode.MULTI_EXPERT if self.mode == "multi" else PanelMode.SINGLE_EXPERT
        return OrchestratorConfig(
            mode=mode, retrieval=RetrievalConfig(k=self.retrieval_k),
            template_set=self.template_set, model_id=self.model_id,
            temperature=self.temperature, max_workers=self.max_workers)

    def chunking(self) -> ChunkingConfig:
        return ChunkingConfig(chunk_tokens=self.chunk_tokens,
                              overlap_tokens=self.overlap_tokens)

    @classmethod
    def from_payload(cls, payload: Mapping) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in payload.items() if k in known})


@dataclass(frozen=True)
class PairResult:
    patient_id: str
    trial_id: str
    report: Optional[EligibilityReport]
    report_bytes: Optional[bytes]
    error: Optional[str]
    skipped: bool = False


@dataclass(frozen=True)
class RunResult:
    results: tuple[PairResult, ...]
    ledger_records: tuple[dict, ...]
    config_digest: str
    kb_version: int

    @property
    def reports(self) -> list[EligibilityReport]:
        return [r.report for r in self.results if r.report is not None]

    @property
    def failures(self) -> list[PairResult]:
        return [r for r in self.results if r.error is not None]

    def ledger_payload(self) -> dict:
        prompt = sum(r["prompt_tokens"] for r in self.ledger_records)
        completion = sum(r["completion_tokens"] for r in self.ledger_records)
        cost = sum(r["cost"] for r in self.ledger_records)
        return {
            "config_digest": self.config_digest,
            "kb_version": self.kb_version,
            "total_prompt_tokens": prompt,
            "total_completion_tokens": completion,
            "total_cost": cost,
            "call_count": len(self.ledger_records),
            "entries": list(self.ledger_records),
        }


def report_key(run_id: str, trial_id: str, patient_id: str) -> str:
    return f"runs/{run_id}/reports/{trial_id}__{patient_id}.json"


def ledger_key(run_id: str) -> str:
    return f"runs/{run_id}/ledger.json"


class Pipeline:
    """Shared machinery for CLI runs and service jobs."""

    def __init__(self, corpus: DocumentCorpus, trials: Sequence[Trial],
                 config: RunConfig, backend: Backend,
                 prices: PriceTable = PriceTable(),
                 kb: Optional[KnowledgeBase] = None,
                 routing: Optional[SpecialtyRouting] = None):
        self.corpus = corpus
        self.trials = {t.id: t for t in trials}
        self.config = config
        self.backend = backend
        self.prices = prices
        self.kb = kb if kb is not None else KnowledgeBase()
        self.routing = routing if routing is not None else default_routing()
        self.tokenizer = load_tokenizer(config.tokenizer)
        self.embedder = HashEmbedder(dimension=config.embedding_dim)
        self._store_cache: dict[tuple[str, Optional[date]], dict[Specialty, VectorStore]] = {}

    def trial(self, trial_id: str) -> Trial:
        if trial_id not in self.trials:
            raise NotFoundError(f"unknown trial {trial_id!r}")
        return self.trials[trial_id]

    def kb_snapshot(self) -> KBSnapshot:
        if self.config.use_kb:
            return self.kb.snapshot()
        return KBSnapshot(version=0, entries=())

    def patient_stores(self, patient_id: str,
                       cutoff: Optional[date] = None) -> dict[Specialty, VectorStore]:
        """Build (or reuse) the per-specialty stores for one patient."""
        key = (patient_id, cutoff)
        if key in self._store_cache:
            return self._store_cache[key]
        docs = self.corpus.documents(patient_id)
        if cutoff is not None:
            docs = [d for d in docs if d.created_date < cutoff]
        chunks_by_specialty: dict[Specialty, list[DocumentChunk]] = {}
        for doc in sorted(docs, key=lambda d: d.doc_id):
            specialty = assign_specialty(doc, self.routing)
            if specialty is None:
                continue
            chunks = chunk_document(doc, self.tokenizer, self.config.chunking())
            chunks_by_specialty.setdefault(specialty, []).extend(chunks)
        stores = {
            sp: build_store(chunks, self.embedder, self.config.chunking(),
                            specialty=sp).store
            for sp, chunks in chunks_by_specialty.items()}
        self._store_cache[key] = stores
        return stores

    def run_pair(self, patient_id: str, trial_id: str,
                 cutoff: Optional[date] = None) -> tuple[EligibilityReport, bytes, CostLedger]:
        trial = self.trial(trial_id)
        stores = self.patient_stores(patient_id, cutoff)
        ledger = CostLedger()
        gateway = Gateway(self.backend, prices=self.prices, ledger=ledger,
                          usage_tokenizer=self.tokenizer)
        snapshot = self.kb_snapshot()
        orchestrator = Orchestrator(gateway, self.embedder,
                                    config=self.config.orchestrator_config(),
                                    kb_snapshot=snapshot)
        assessments = orchestrator.assess_trial(trial, stores)
        report = determine(trial, assessments, patient_id)
        body = serialize_report(report, config_digest=self.config.digest(),
                                kb_version=snapshot.version,
                                ledger_records=ledger.to_records())
        return report, body, ledger

    def run_many(self, pairs: Sequence[tuple[str, str]], *,
                 store: Optional[KeyValueStore] = None, run_id: str = "run",
                 cutoffs: Optional[Mapping[tuple[str, str], date]] = None,
                 fresh: bool = False) -> RunResult:
        """Assess pairs in order; failures are recorded, not raised.

        With a persistence store, finished pairs are skipped on rerun
        unless ``fresh`` clears them first.  Pairs are (patient_id,
        trial_id); cutoffs are keyed the same way.
        """
        if store is not None and fresh:
            for key in store.keys(f"runs/{run_id}/"):
                store.delete(key)
        results: list[PairResult] = []
        ledger_records: list[dict] = []
        snapshot_version = self.kb_snapshot().version
        for patient_id, trial_id in pairs:
            key = report_key(run_id, trial_id, patient_id)
            if store is not None and not fresh and store.get(key) is not None:
                results.append(PairResult(patient_id=patient_id, trial_id=trial_id,
                                          report=None, report_bytes=store.get(key),
                                          error=None, skipped=True))
                continue
            cutoff = (cutoffs or {}).get((patient_id, trial_id))
            try:
                report, body, ledger = self.run_pair(patient_id, trial_id, cutoff)
            except (EmptyPanelError, TrialScreenError) as exc:
                results.append(PairResult(patient_id=patient_id, trial_id=trial_id,
                                          report=None, report_bytes=None,
                                          error=f"{type(exc).__name__}: {exc}"))
                continue
            if store is not None:
                store.put(key, body)
            ledger_records.extend(ledger.to_records())
            results.append(PairResult(patient_id=patient_id, trial_id=trial_id,
                                      report=report, report_bytes=body, error=None))
        result = RunResult(results=tuple(results),
                           ledger_records=tuple(ledger_records),
                           config_digest=self.config.digest(),
                           kb_version=snapshot_version)
        if store is not None:
            store.put(ledger_key(run_id), canonical_json_bytes(result.ledger_payload()))
        return result
