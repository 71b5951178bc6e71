"""Command line entry points over a file-backed workspace.

A workspace is a directory holding everything one screening deployment
needs: config.json, corpus.jsonl, protocols/, kb.jsonl, optional script
rules or cassettes for offline backends, and a runs/ tree of persisted
reports.  Every subcommand takes --workspace and reads the rest from
there, so runs are reproducible from the directory alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

from .corpus import ingest_jsonl, write_jsonl
from .eligibility import Determination
from .errors import TrialScreenError, ValidationError
from .evaluation import (LabeledPair, confusion, disqualifying_histogram,
                         metrics_summary)
from .gateway import (LiveBackend, PriceTable, RecordingBackend, ReplayBackend,
                      ScriptedBackend)
from .kb import ErrorMode, load_kb, save_kb
from .pipeline import Pipeline, RunConfig, report_key
from .protocol import load_protocols, serialize_protocol
from .reports import report_from_payload
from .storage import FileStore
from .synthetic import CohortSpec, generate_synthetic_cohort
from .triage import TriagePolicy, select_for_review
from .vectorstore import save_store

CONFIG_NAME = "config.json"
CORPUS_NAME = "corpus.jsonl"
KB_NAME = "kb.jsonl"
LABELS_NAME = "labels.jsonl"
RULES_NAME = "script_rules.json"
PROTOCOL_DIR = "protocols"


class Workspace:
    """Lazily loaded view of one workspace directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not (self.root / CONFIG_NAME).exists():
            raise ValidationError(
                f"no {CONFIG_NAME} in {self.root}; run init-synthetic or "
                f"create the workspace first")
        self.config = json.loads((self.root / CONFIG_NAME).read_text())

    def run_config(self, args: Optional[argparse.Namespace] = None) -> RunConfig:
        cfg = RunConfig.from_payload(self.config.get("run", {}))
        if args is None:
            return cfg
        updates = {}
        if getattr(args, "mode", None):
            updates["mode"] = args.mode
        if getattr(args, "backend", None):
            updates["backend"] = args.backend
        if getattr(args, "use_kb", None) is not None:
            updates["use_kb"] = args.use_kb
        return dataclasses.replace(cfg, **updates) if updates else cfg

    def corpus(self):
        path = self.root / CORPUS_NAME
        if not path.exists():
            raise ValidationError(f"no {CORPUS_NAME} in {self.root}; "
                                  f"run the ingest subcommand first")
        return ingest_jsonl(path)

    def trials(self):
        return load_protocols(self.root / PROTOCOL_DIR)

    def kb(self):
        return load_kb(self.root / KB_NAME)

    def prices(self) -> PriceTable:
        path = self.root / "prices.json"
        if path.exists():
            return PriceTable.from_file(path)
        pricing = self.config.get("pricing")
        if pricing:
            return PriceTable(default_input=pricing.get("default_input", 0.0),
                              default_output=pricing.get("default_output", 0.0))
        return PriceTable()

    def backend(self, run_config: RunConfig):
        name = run_config.backend
        if name == "scripted":
            return ScriptedBackend.from_file(self.root / RULES_NAME)
        if name == "replay":
            return ReplayBackend(self.root / "cassettes" / "run.json")
        if name == "live":
            live_cfg = self.config.get("live", {})
            base_url = live_cfg.get("base_url", "")
            if not base_url:
                raise ValidationError("live backend needs config.live.base_url")
            backend = LiveBackend(base_url,
                                  api_key_env=live_cfg.get("api_key_env",
                                                           "TRIALSCREEN_API_KEY"))
            if live_cfg.get("record_to"):
                return RecordingBackend(backend, self.root / live_cfg["record_to"])
            return backend
        raise ValidationError(f"unknown backend {name!r}")

    def pipeline(self, run_config: RunConfig) -> Pipeline:
        return Pipeline(self.corpus(), self.trials(), run_config,
                        self.backend(run_config), self.prices(), kb=self.kb())

    def store(self) -> FileStore:
        return FileStore(self.root)

    def labels(self, path: Optional[str] = None) -> list[LabeledPair]:
        source = Path(path) if path else self.root / LABELS_NAME
        if not source.exists():
            raise ValidationError(f"no labels file at {source}")
        pairs = []
        for line in source.read_text().splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs.append(LabeledPair(
                patient_id=rec["patient_id"], trial_id=rec["trial_id"],
                label=Determination(rec["label"]),
                label_source=rec.get("label_source", "Original")))
        return pairs

    def policy(self, threshold: Optional[int] = None) -> TriagePolicy:
        if threshold is None:
            threshold = self.config.get("policy", {}).get("threshold", 2)
        return TriagePolicy(threshold=threshold)


def _load_run_reports(ws: Workspace, run_id: str):
    store = ws.store()
    prefix = f"runs/{run_id}/reports/"
    keys = store.keys(prefix)
    if not keys:
        raise ValidationError(f"no reports under {prefix} in {ws.root}")
    reports = []
    for key in keys:
        reports.append(report_from_payload(json.loads(store.get(key))))
    return reports


# ---------------------------------------------------------------------------
# Subcommands

def cmd_init_synthetic(args) -> int:
    root = Path(args.workspace)
    root.mkdir(parents=True, exist_ok=True)
    spec = CohortSpec(eligible_per_trial=args.eligible,
                      ineligible_per_trial=args.ineligible,
                      error_rate=args.error_rate, max_flips=args.max_flips)
    cohort = generate_synthetic_cohort(spec, seed=args.seed)

    (root / PROTOCOL_DIR).mkdir(exist_ok=True)
    for trial in cohort.trials:
        path = root / PROTOCOL_DIR / f"{trial.id}.trial"
        path.write_text(serialize_protocol(trial), encoding="utf-8")

    with (root / CORPUS_NAME).open("w", encoding="utf-8") as fh:
        for record in cohort.documents:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    rules_payload = {"rules": [{"contains": list(r.contains), "reply": r.reply}
                               for r in cohort.rules]}
    (root / RULES_NAME).write_text(
        json.dumps(rules_payload, indent=2, sort_keys=True), encoding="utf-8")

    with (root / LABELS_NAME).open("w", encoding="utf-8") as fh:
        for lp in cohort.pairs:
            fh.write(json.dumps({
                "patient_id": lp.patient_id, "trial_id": lp.trial_id,
                "label": lp.label.value, "label_source": lp.label_source,
            }, sort_keys=True) + "\n")

    kb = cohort.seed_kb()
    save_kb(kb, root / "kb_seed.jsonl")

    config = {
        "run": RunConfig().to_payload(),
        "policy": {"threshold": 2},
        "service": {"token": "dev-token"},
    }
    (root / CONFIG_NAME).write_text(
        json.dumps(config, indent=2, sort_keys=True), encoding="utf-8")

    print(f"workspace {root}")
    print(f"  trials     {len(cohort.trials)}")
    print(f"  pairs      {len(cohort.pairs)}")
    print(f"  documents  {len(cohort.documents)}")
    print(f"  rules      {len(cohort.rules)}")
    print(f"  kb seed    {kb.version} entries (kb_seed.jsonl; copy to "
          f"{KB_NAME} and set run.use_kb to enable)")
    return 0


def cmd_ingest(args) -> int:
    ws = Workspace(args.workspace)
    corpus = ingest_jsonl(args.input)
    write_jsonl(corpus, ws.root / CORPUS_NAME)
    print(f"ingested {len(corpus)} documents "
          f"for {len(corpus.patient_ids)} patients into {ws.root / CORPUS_NAME}")
    return 0


def cmd_index(args) -> int:
    ws = Workspace(args.workspace)
    cfg = ws.run_config()
    pipeline = ws.pipeline(cfg)
    out_dir = ws.root / "indexes"
    out_dir.mkdir(exist_ok=True)
    patients = args.patient or pipeline.corpus.patient_ids
    total = 0
    for pid in patients:
        stores = pipeline.patient_stores(pid)
        for specialty, store in sorted(stores.items(), key=lambda kv: kv[0].value):
            path = out_dir / f"{pid}__{specialty.value}.json"
            save_store(store, path)
            total += len(store.chunks)
            print(f"{pid} {specialty.value}: {len(store.chunks)} chunks -> {path.name}")
    print(f"indexed {total} chunks for {len(patients)} patients")
    return 0


def cmd_run(args) -> int:
    ws = Workspace(args.workspace)
    cfg = ws.run_config(args)
    pipeline = ws.pipeline(cfg)
    if args.pairs:
        pair_list = [(rec["patient_id"], rec["trial_id"])
                     for rec in map(json.loads,
                                    Path(args.pairs).read_text().splitlines())
                     if rec]
    else:
        pair_list = [(lp.patient_id, lp.trial_id) for lp in ws.labels()]
    result = pipeline.run_many(pair_list, store=ws.store(), run_id=args.run_id,
                               fresh=args.fresh)
    for r in result.results:
        if r.error is not None:
            print(f"{r.trial_id} {r.patient_id}: FAILED {r.error}")
        elif r.skipped:
            print(f"{r.trial_id} {r.patient_id}: skipped (already assessed)")
        else:
            print(f"{r.trial_id} {r.patient_id}: "
                  f"{r.report.determination.value} "
                  f"(disqualifying {r.report.disqualifying_count})")
    done = sum(1 for r in result.results if r.error is None)
    print(f"run {args.run_id}: {done}/{len(pair_list)} pairs, "
          f"config {result.config_digest[:12]}, kb v{result.kb_version}")
    if result.failures:
        print(f"{len(result.failures)} pair(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_evaluate(args) -> int:
    ws = Workspace(args.workspace)
    reports = _load_run_reports(ws, args.run_id)
    labels = ws.labels(args.labels)
    predictions = {(r.trial_id, r.patient_id): r.determination for r in reports}
    label_keys = {(lp.trial_id, lp.patient_id) for lp in labels}
    labels = [lp for lp in labels if (lp.trial_id, lp.patient_id) in predictions]
    predictions = {k: v for k, v in predictions.items() if k in label_keys}
    cm = confusion(predictions, labels)
    summary = metrics_summary(cm, confidence=args.confidence)
    print(f"pairs {cm.total}  tp {cm.tp}  fn {cm.fn}  fp {cm.fp}  tn {cm.tn}")
    for name, est in (("accuracy", summary.accuracy),
                      ("sensitivity", summary.sensitivity),
                      ("specificity", summary.specificity),
                      ("ppv", summary.ppv),
                      ("npv", summary.npv)):
        print(f"{name:12s} {est.point:.4f}  [{est.lo:.4f}, {est.hi:.4f}]")
    hist = disqualifying_histogram(reports, labels)
    for count in sorted(hist):
        row = hist[count]
        print(f"disqualifying={count}: tn {row['tn']}  fn {row['fn']}")
    if args.json:
        payload = {
            "confusion": {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn},
            "metrics": {name: {"point": est.point, "lo": est.lo, "hi": est.hi}
                        for name, est in (("accuracy", summary.accuracy),
                                          ("sensitivity", summary.sensitivity),
                                          ("specificity", summary.specificity),
                                          ("ppv", summary.ppv),
                                          ("npv", summary.npv))},
            "disqualifying_histogram": {str(k): hist[k] for k in sorted(hist)},
        }
        Path(args.json).write_text(json.dumps(payload, indent=2, sort_keys=True))
        print(f"wrote {args.json}")
    return 0


def cmd_triage(args) -> int:
    ws = Workspace(args.workspace)
    reports = _load_run_reports(ws, args.run_id)
    policy = ws.policy(args.threshold)
    queue = select_for_review(reports, policy)
    for item in queue:
        print(f"{item.disqualifying_count}  {item.trial_id}  {item.patient_id}  "
              f"{item.report.determination.value}")
    print(f"{len(queue)} of {len(reports)} reports queued for review "
          f"(threshold {policy.threshold})")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    ws = Workspace(args.workspace)
    cfg = ws.run_config(args)
    pipeline = ws.pipeline(cfg)
    token = args.token or ws.config.get("service", {}).get("token", "dev-token")
    state = ServiceState(pipeline, store=ws.store(), auth_token=token,
                         policy=ws.policy(None))
    app = create_app(state)
    print(f"serving on {args.host}:{args.port} "
          f"(config {cfg.digest()[:12]}, kb v{pipeline.kb.version})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_kb_append(args) -> int:
    ws = Workspace(args.workspace)
    kb = ws.kb()
    entry = kb.append(args.text, ErrorMode(args.error_mode),
                      trial_id=args.trial or "", criterion_id=args.criterion or "",
                      author=args.author or "")
    save_kb(kb, ws.root / KB_NAME)
    print(f"entry {entry.entry_id} appended; kb version {kb.version}")
    return 0


def cmd_kb_export(args) -> int:
    ws = Workspace(args.workspace)
    kb = ws.kb()
    if args.out:
        save_kb(kb, args.out)
        print(f"wrote {kb.version} entries to {args.out}")
    else:
        from .kb import entry_to_record
        for entry in kb.entries():
            print(json.dumps(entry_to_record(entry), sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser assembly

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialscreen",
        description="Trial eligibility prescreening over patient document sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    def ws_arg(p):
        p.add_argument("--workspace", required=True,
                       help="workspace directory holding config and data")

    p = sub.add_parser("init-synthetic",
                       help="materialize a scripted synthetic workspace")
    ws_arg(p)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eligible", type=int, default=4)
    p.add_argument("--ineligible", type=int, default=5)
    p.add_argument("--error-rate", type=float, default=0.5)
    p.add_argument("--max-flips", type=int, default=2)
    p.set_defaults(func=cmd_init_synthetic)

    p = sub.add_parser("ingest", help="validate and normalize a document export")
    ws_arg(p)
    p.add_argument("--input", required=True, help="JSONL of patient documents")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build and snapshot per-patient stores")
    ws_arg(p)
    p.add_argument("--patient", action="append",
                   help="limit to this patient id (repeatable)")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("run", help="assess patient-trial pairs")
    ws_arg(p)
    p.add_argument("--run-id", default="run")
    p.add_argument("--pairs", help="JSONL of {patient_id, trial_id} pairs; "
                                   "defaults to the labels file")
    p.add_argument("--mode", choices=["multi", "single"])
    p.add_argument("--backend", choices=["scripted", "replay", "live"])
    kb_group = p.add_mutually_exclusive_group()
    kb_group.add_argument("--kb", dest="use_kb", action="store_true",
                          default=None, help="inject reviewer guidance")
    kb_group.add_argument("--no-kb", dest="use_kb", action="store_false",
                          help="suppress reviewer guidance")
    p.add_argument("--fresh", action="store_true",
                   help="discard previous results for this run id")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score a run against labels")
    ws_arg(p)
    p.add_argument("--run-id", default="run")
    p.add_argument("--labels", help="labels JSONL; defaults to workspace labels")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--json", help="also write a JSON summary here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("triage", help="list reports queued for human review")
    ws_arg(p)
    p.add_argument("--run-id", default="run")
    p.add_argument("--threshold", type=int)
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("serve", help="start the HTTP service")
    ws_arg(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", help="bearer token; defaults to config")
    p.add_argument("--mode", choices=["multi", "single"])
    p.add_argument("--backend", choices=["scripted", "replay", "live"])
    kb_group = p.add_mutually_exclusive_group()
    kb_group.add_argument("--kb", dest="use_kb", action="store_true", default=None)
    kb_group.add_argument("--no-kb", dest="use_kb", action="store_false")
    p.set_defaults(func=cmd_serve)

    kb_parser = sub.add_parser("kb", help="knowledge base maintenance")
    kb_sub = kb_parser.add_subparsers(dest="kb_command", required=True)

    p = kb_sub.add_parser("append", help="append one guidance entry")
    ws_arg(p)
    p.add_argument("--text", required=True)
    p.add_argument("--error-mode", default="other",
                   choices=[m.value for m in ErrorMode])
    p.add_argument("--trial")
    p.add_argument("--criterion")
    p.add_argument("--author")
    p.set_defaults(func=cmd_kb_append)

    p = kb_sub.add_parser("export", help="dump the knowledge base as JSONL")
    ws_arg(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_kb_export)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrialScreenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
