"""HTTP service for runs, reports, evidence, triage, KB, and metrics.

The service owns one pipeline configuration and one persistence store.
Reports are served as the exact bytes the pipeline persisted; the config
digest and current KB version travel in response headers so every payload
is auditable without re-rendering anything.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .eligibility import Determination
from .errors import (ConflictError, NotFoundError, StateError, TrialScreenError,
                     ValidationError)
from .evaluation import LabeledPair, confusion, disqualifying_histogram, metrics_summary
from .kb import ErrorMode, entry_to_record
from .pipeline import Pipeline, ledger_key, report_key
from .protocol import CriterionStatus
from .reports import canonical_json_bytes, report_from_payload
from .storage import KeyValueStore, MemoryStore
from .triage import (Override, TriageItem, TriagePolicy, TriageState, apply_override,
                     confirm, select_for_review)

API_PREFIX = "/api/v1"


@dataclass
class RunJob:
    job_id: str
    pairs: list[tuple[str, str]]
    state: str = "Queued"  # Queued, Running, Done, Failed
    done: int = 0
    failed: int = 0
    config_digest: str = ""
    kb_version: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "progress": {"done": self.done, "failed": self.failed,
                         "total": len(self.pairs)},
            "pairs": [{"patient_id": p, "trial_id": t} for p, t in self.pairs],
            "config_digest": self.config_digest,
            "kb_version": self.kb_version,
            "failures": self.failures,
        }


class ServiceState:
    """Everything behind the endpoints; shared across requests."""

    def __init__(self, pipeline: Pipeline, store: Optional[KeyValueStore] = None,
                 auth_token: str = "dev-token",
                 policy: TriagePolicy = TriagePolicy(),
                 now: Callable[[], float] = time.time,
                 run_in_thread: bool = True):
        self.pipeline = pipeline
        self.store = store if store is not None else MemoryStore()
        self.auth_token = auth_token
        self.policy = policy
        self.now = now
        self.run_in_thread = run_in_thread
        self.jobs: dict[str, RunJob] = {}
        self.items: dict[tuple[str, str, str], TriageItem] = {}
        self.claims: dict[tuple[str, str, str], str] = {}
        self.opened_at: dict[tuple[str, str, str, str], float] = {}
        self.events: list[dict] = []
        self.evaluations: dict[str, dict] = {}
        self.idempotency: dict[tuple[str, str], tuple[int, bytes]] = {}
        self.lock = threading.RLock()

    # -- jobs ---------------------------------------------------------------

    def submit_run(self, pairs: list[tuple[str, str]], run_id: Optional[str]) -> RunJob:
        job_id = run_id or uuid.uuid4().hex[:12]
        with self.lock:
            if job_id in self.jobs:
                raise ConflictError(f"run {job_id!r} already exists")
            job = RunJob(job_id=job_id, pairs=pairs,
                         config_digest=self.pipeline.config.digest(),
                         kb_version=self.pipeline.kb_snapshot().version)
            self.jobs[job_id] = job
        if self.run_in_thread:
            threading.Thread(target=self._execute, args=(job,), daemon=True).start()
        else:
            self._execute(job)
        return job

    def _execute(self, job: RunJob) -> None:
        with self.lock:
            job.state = "Running"
        try:
            result = self.pipeline.run_many(job.pairs, store=self.store,
                                            run_id=job.job_id)
        except Exception as exc:  # job-level failure, preserved for polling
            with self.lock:
                job.state = "Failed"
                job.failures.append({"error": str(exc)})
            return
        with self.lock:
            job.done = sum(1 for r in result.results if r.error is None)
            job.failed = len(result.failures)
            job.failures = [{"patient_id": r.patient_id, "trial_id": r.trial_id,
                             "error": r.error} for r in result.failures]
            job.state = "Done"

    def job(self, job_id: str) -> RunJob:
        with self.lock:
            if job_id not in self.jobs:
                raise NotFoundError(f"unknown run {job_id!r}")
            return self.jobs[job_id]

    def report_bytes(self, job_id: str, trial_id: str, patient_id: str) -> bytes:
        body = self.store.get(report_key(job_id, trial_id, patient_id))
        if body is None:
            raise NotFoundError(f"no report for {trial_id}/{patient_id} "
                                f"in run {job_id!r}")
        return body

    # -- triage -------------------------------------------------------------

    def _item_key(self, job_id: str, trial_id: str, patient_id: str) -> tuple[str, str, str]:
        return (job_id, trial_id, patient_id)

    def ensure_queue(self, job_id: str) -> list[tuple[tuple[str, str, str], TriageItem]]:
        job = self.job(job_id)
        if job.state != "Done":
            raise StateError(f"run {job_id!r} is {job.state}; queue needs Done")
        with self.lock:
            existing = [k for k in self.items if k[0] == job_id]
            if not existing:
                reports = []
                for patient_id, trial_id in job.pairs:
                    body = self.store.get(report_key(job_id, trial_id, patient_id))
                    if body is None:
                        continue
                    reports.append(report_from_payload(json.loads(body)))
                for item in select_for_review(reports, self.policy):
                    key = self._item_key(job_id, item.trial_id, item.patient_id)
                    self.items[key] = item
            ordered = sorted(
                (k for k in self.items if k[0] == job_id),
                key=lambda k: (self.items[k].disqualifying_count, k[1], k[2]))
            return [(k, self.items[k]) for k in ordered]

    def item_payload(self, key: tuple[str, str, str], item: TriageItem) -> dict:
        return {
            "job_id": key[0],
            "trial_id": item.trial_id,
            "patient_id": item.patient_id,
            "disqualifying_count": item.disqualifying_count,
            "state": item.state.value,
            "version": item.version,
            "claimed_by": self.claims.get(key, ""),
            "reviewer_id": item.reviewer_id,
            "review_duration_s": item.review_duration_s,
            "determination": item.report.determination.value,
        }

    def claim(self, job_id: str, trial_id: str, patient_id: str,
              version: int, reviewer_id: str) -> TriageItem:
        self.ensure_queue(job_id)
        key = self._item_key(job_id, trial_id, patient_id)
        with self.lock:
            if key not in self.items:
                raise NotFoundError(f"no queue item for {trial_id}/{patient_id}")
            item = self.items[key]
            if item.state is not TriageState.PENDING:
                raise StateError(f"item already {item.state.value}")
            if item.version != version:
                raise ConflictError(f"stale version {version}, now {item.version}")
            holder = self.claims.get(key)
            if holder and holder != reviewer_id:
                raise ConflictError(f"item claimed by {holder!r}")
            self.claims[key] = reviewer_id
            self.opened_at[(job_id, trial_id, patient_id, reviewer_id)] = self.now()
            self.events.append({"reviewer_id": reviewer_id, "event": "Opened",
                                "job_id": job_id, "trial_id": trial_id,
                                "patient_id": patient_id, "timestamp": self.now()})
            return item

    def decide(self, job_id: str, trial_id: str, patient_id: str, version: int,
               reviewer_id: str, action: str,
               overrides: list[Override]) -> TriageItem:
        key = self._item_key(job_id, trial_id, patient_id)
        with self.lock:
            if key not in self.items:
                raise NotFoundError(f"no queue item for {trial_id}/{patient_id}")
            item = self.items[key]
            if item.version != version:
                raise ConflictError(f"stale version {version}, now {item.version}")
            holder = self.claims.get(key)
            if holder != reviewer_id:
                raise ConflictError(
                    f"decision requires a claim by {reviewer_id!r}; "
                    f"item claimed by {holder!r}")
            opened = self.opened_at.get((job_id, trial_id, patient_id, reviewer_id))
            if opened is None:
                raise StateError("decision without a recorded open event")
            duration = self.now() - opened
            if action == "confirm":
                decided = confirm(item, reviewer_id=reviewer_id,
                                  review_duration_s=duration)
            else:
                trial = self.pipeline.trial(trial_id)
                decided, updated = apply_override(
                    item, trial, overrides, self.pipeline.kb,
                    reviewer_id=reviewer_id, review_duration_s=duration)
            self.items[key] = decided
            self.events.append({"reviewer_id": reviewer_id, "event": "Decided",
                                "job_id": job_id, "trial_id": trial_id,
                                "patient_id": patient_id, "timestamp": self.now()})
            return decided

    # -- evaluations --------------------------------------------------------

    def evaluate(self, job_id: str, labels: list[LabeledPair]) -> dict:
        job = self.job(job_id)
        if job.state != "Done":
            raise StateError(f"run {job_id!r} is {job.state}; evaluation needs Done")
        reports = []
        for patient_id, trial_id in job.pairs:
            body = self.store.get(report_key(job_id, trial_id, patient_id))
            if body is None:
                raise NotFoundError(f"missing report {trial_id}/{patient_id}")
            reports.append(report_from_payload(json.loads(body)))
        predictions = {(r.trial_id, r.patient_id): r.determination for r in reports}
        cm = confusion(predictions, labels)
        summary = metrics_summary(cm)
        eval_id = uuid.uuid4().hex[:12]
        payload = {
            "evaluation_id": eval_id,
            "job_id": job_id,
            "confusion": {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn},
            "metrics": {
                name: {"point": est.point, "lo": est.lo, "hi": est.hi}
                for name, est in (("accuracy", summary.accuracy),
                                  ("sensitivity", summary.sensitivity),
                                  ("specificity", summary.specificity),
                                  ("ppv", summary.ppv),
                                  ("npv", summary.npv))
            },
            "disqualifying_histogram": {
                str(k): v for k, v in
                sorted(disqualifying_histogram(reports, labels).items())
            },
        }
        with self.lock:
            self.evaluations[eval_id] = payload
        return payload


# ---------------------------------------------------------------------------
# Request models

class PairIn(BaseModel):
    patient_id: str
    trial_id: str


class RunIn(BaseModel):
    pairs: list[PairIn]
    run_id: Optional[str] = None


class ClaimIn(BaseModel):
    job_id: str
    trial_id: str
    patient_id: str
    version: int
    reviewer_id: str


class OverrideIn(BaseModel):
    criterion_id: str
    new_status: str
    note: str = ""
    error_mode: str = "other"


class DecisionIn(BaseModel):
    job_id: str
    trial_id: str
    patient_id: str
    version: int
    reviewer_id: str
    action: str = Field(pattern="^(confirm|override)$")
    overrides: list[OverrideIn] = Field(default_factory=list)


class KBEntryIn(BaseModel):
    text: str
    error_mode: str = "other"
    trial_id: str = ""
    criterion_id: str = ""
    author: str = ""


class LabelIn(BaseModel):
    patient_id: str
    trial_id: str
    label: str
    label_source: str = "Original"


class EvaluateIn(BaseModel):
    job_id: str
    labels: list[LabelIn]


# ---------------------------------------------------------------------------
# App assembly

def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="trialscreen service", docs_url=None, redoc_url=None)

    def authed(authorization: str = Header(default="")) -> None:
        if authorization != f"Bearer {state.auth_token}":
            raise PermissionError("missing or invalid bearer token")

    @app.exception_handler(PermissionError)
    async def _unauth(request: Request, exc: PermissionError):
        return JSONResponse(status_code=401, content={"detail": str(exc)})

    @app.exception_handler(TrialScreenError)
    async def _domain_error(request: Request, exc: TrialScreenError):
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, (ConflictError, StateError)):
            status = 409
        else:
            status = 422
        return JSONResponse(status_code=status,
                            content={"detail": str(exc),
                                     "error": type(exc).__name__})

    @app.middleware("http")
    async def _audit_headers(request: Request, call_next):
        response = await call_next(request)
        response.headers["X-Config-Digest"] = state.pipeline.config.digest()
        response.headers["X-KB-Version"] = str(state.pipeline.kb.version)
        return response

    def idempotent(request: Request, key_header: Optional[str],
                   producer: Callable[[], Response]) -> Response:
        if not key_header:
            return producer()
        cache_key = (f"{request.method} {request.url.path}", key_header)
        with state.lock:
            hit = state.idempotency.get(cache_key)
        if hit is not None:
            status, body = hit
            return Response(content=body, status_code=status,
                            media_type="application/json")
        response = producer()
        with state.lock:
            state.idempotency[cache_key] = (response.status_code, response.body)
        return response

    prefix = API_PREFIX

    @app.get(f"{prefix}/trials", dependencies=[Depends(authed)])
    def list_trials():
        return [{"trial_id": t.id, "nct_id": t.nct_id,
                 "metastatic_group": t.metastatic_group.value,
                 "criterion_count": len(t.criteria)}
                for t in sorted(state.pipeline.trials.values(), key=lambda t: t.id)]

    @app.get(f"{prefix}/trials/{{trial_id}}", dependencies=[Depends(authed)])
    def get_trial(trial_id: str):
        trial = state.pipeline.trial(trial_id)
        return {
            "trial_id": trial.id,
            "nct_id": trial.nct_id,
            "metastatic_group": trial.metastatic_group.value,
            "criteria": [{"criterion_id": c.id, "kind": c.kind.value,
                          "flag": c.flag.value, "text": c.text}
                         for c in trial.criteria],
        }

    @app.get(f"{prefix}/patients", dependencies=[Depends(authed)])
    def list_patients():
        return {"patient_ids": state.pipeline.corpus.patient_ids}

    @app.post(f"{prefix}/runs", dependencies=[Depends(authed)], status_code=202)
    def submit_run(body: RunIn, request: Request,
                   idempotency_key: Optional[str] = Header(default=None)):
        def produce() -> Response:
            job = state.submit_run([(p.patient_id, p.trial_id) for p in body.pairs],
                                   body.run_id)
            return Response(content=canonical_json_bytes(job.to_payload()),
                            status_code=202, media_type="application/json")
        return idempotent(request, idempotency_key, produce)

    @app.get(f"{prefix}/runs/{{job_id}}", dependencies=[Depends(authed)])
    def poll_run(job_id: str):
        with state.lock:
            return state.job(job_id).to_payload()

    @app.get(f"{prefix}/runs/{{job_id}}/reports/{{trial_id}}/{{patient_id}}",
             dependencies=[Depends(authed)])
    def fetch_report(job_id: str, trial_id: str, patient_id: str):
        body = state.report_bytes(job_id, trial_id, patient_id)
        return Response(content=body, media_type="application/json")

    @app.get(f"{prefix}/runs/{{job_id}}/reports/{{trial_id}}/{{patient_id}}"
             f"/evidence/{{criterion_id}}", dependencies=[Depends(authed)])
    def fetch_evidence(job_id: str, trial_id: str, patient_id: str, criterion_id: str):
        payload = json.loads(state.report_bytes(job_id, trial_id, patient_id))
        for assessment in payload["assessments"]:
            if assessment["criterion_id"] == criterion_id:
                return {
                    "criterion_id": criterion_id,
                    "short_circuited": assessment["short_circuited"],
                    "evidence": [
                        {"specialty": op["specialty"], "snippets": op["evidence"]}
                        for op in assessment["opinions"]
                    ],
                }
        raise NotFoundError(f"no criterion {criterion_id!r} in report")

    @app.get(f"{prefix}/runs/{{job_id}}/ledger", dependencies=[Depends(authed)])
    def fetch_ledger(job_id: str):
        state.job(job_id)
        body = state.store.get(ledger_key(job_id))
        if body is None:
            raise NotFoundError(f"no ledger for run {job_id!r}")
        return Response(content=body, media_type="application/json")

    @app.get(f"{prefix}/triage/queue", dependencies=[Depends(authed)])
    def triage_queue(job_id: str):
        items = state.ensure_queue(job_id)
        return {"job_id": job_id,
                "items": [state.item_payload(k, item) for k, item in items]}

    @app.post(f"{prefix}/triage/claim", dependencies=[Depends(authed)])
    def triage_claim(body: ClaimIn, request: Request,
                     idempotency_key: Optional[str] = Header(default=None)):
        def produce() -> Response:
            item = state.claim(body.job_id, body.trial_id, body.patient_id,
                               body.version, body.reviewer_id)
            key = (body.job_id, body.trial_id, body.patient_id)
            return Response(
                content=canonical_json_bytes(state.item_payload(key, item)),
                media_type="application/json")
        return idempotent(request, idempotency_key, produce)

    @app.post(f"{prefix}/triage/decision", dependencies=[Depends(authed)])
    def triage_decision(body: DecisionIn, request: Request,
                        idempotency_key: Optional[str] = Header(default=None)):
        def produce() -> Response:
            overrides = [Override(criterion_id=o.criterion_id,
                                  new_status=CriterionStatus(o.new_status),
                                  note=o.note, error_mode=ErrorMode(o.error_mode))
                         for o in body.overrides]
            item = state.decide(body.job_id, body.trial_id, body.patient_id,
                                body.version, body.reviewer_id, body.action,
                                overrides)
            key = (body.job_id, body.trial_id, body.patient_id)
            payload = state.item_payload(key, item)
            payload["determination"] = item.report.determination.value
            payload["disqualifying_count_after"] = item.report.disqualifying_count
            payload["tallies"] = {
                "qualifying": item.report.tallies.qualifying,
                "disqualifying": item.report.tallies.disqualifying,
                "unable": item.report.tallies.unable,
            }
            return Response(content=canonical_json_bytes(payload),
                            media_type="application/json")
        return idempotent(request, idempotency_key, produce)

    @app.get(f"{prefix}/kb", dependencies=[Depends(authed)])
    def kb_entries():
        return {"version": state.pipeline.kb.version,
                "entries": [entry_to_record(e)
                            for e in state.pipeline.kb.entries()]}

    @app.post(f"{prefix}/kb", dependencies=[Depends(authed)], status_code=201)
    def kb_append(body: KBEntryIn, request: Request,
                  idempotency_key: Optional[str] = Header(default=None)):
        def produce() -> Response:
            entry = state.pipeline.kb.append(
                body.text, ErrorMode(body.error_mode), trial_id=body.trial_id,
                criterion_id=body.criterion_id, author=body.author)
            return Response(content=canonical_json_bytes(entry_to_record(entry)),
                            status_code=201, media_type="application/json")
        return idempotent(request, idempotency_key, produce)

    @app.get(f"{prefix}/kb/export", dependencies=[Depends(authed)])
    def kb_export():
        lines = [json.dumps(entry_to_record(e), sort_keys=True)
                 for e in state.pipeline.kb.entries()]
        return Response(content="".join(line + "\n" for line in lines),
                        media_type="application/x-ndjson")

    @app.post(f"{prefix}/evaluations", dependencies=[Depends(authed)], status_code=201)
    def create_evaluation(body: EvaluateIn):
        labels = [LabeledPair(patient_id=l.patient_id, trial_id=l.trial_id,
                              label=Determination(l.label),
                              label_source=l.label_source)
                  for l in body.labels]
        return state.evaluate(body.job_id, labels)

    @app.get(f"{prefix}/evaluations/{{eval_id}}", dependencies=[Depends(authed)])
    def get_evaluation(eval_id: str):
        with state.lock:
            if eval_id not in state.evaluations:
                raise NotFoundError(f"unknown evaluation {eval_id!r}")
            return state.evaluations[eval_id]

    return app
