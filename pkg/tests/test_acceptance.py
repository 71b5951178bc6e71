"""End-to-end acceptance checks, one test per release criterion.

Each test prints a single ``criterion NN <name>: PASS`` / ``FAIL`` line
(visible with ``pytest -rA`` or on failure) and enforces its stated time
budget, so the whole file doubles as a release checklist.
"""

import itertools
import json
import math
import random
import shutil
import time
from contextlib import contextmanager
from datetime import date

import numpy as np
from scipy import stats as scipy_stats

from trialscreen.chunking import ChunkingConfig, chunk_document, load_tokenizer
from trialscreen.cli import main as cli_main
from trialscreen.corpus import PatientDocument, Specialty, ingest
from trialscreen.eligibility import Determination, determine
from trialscreen.errors import ScriptMissError
from trialscreen.evaluation import LabeledPair, augment_cross_trial, wilson_interval
from trialscreen.gateway import (CostLedger, Gateway, PriceTable,
                                 ScriptedBackend)
from trialscreen.kb import KnowledgeBase
from trialscreen.orchestrator import (CriterionAssessment, Orchestrator,
                                      OrchestratorConfig)
from trialscreen.pipeline import Pipeline, RunConfig
from trialscreen.protocol import (Criterion, CriterionFlag, CriterionKind,
                                  CriterionStatus, MetastaticGroup, Trial,
                                  load_packaged_protocols)
from trialscreen.synthetic import perfect_reviewer_decisions
from trialscreen.triage import (TriagePolicy, finalize, review_fraction,
                                select_for_review)
from trialscreen.vectorstore import (HashEmbedder, RetrievalConfig, build_store,
                                     search)

ELIGIBLE = Determination.POTENTIALLY_ELIGIBLE
NOT_ELIGIBLE = Determination.NOT_ELIGIBLE


@contextmanager
def verdict(num, title, budget_s):
    started = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - started
        assert elapsed < budget_s, (
            f"criterion {num} exceeded its {budget_s}s budget: {elapsed:.1f}s")
    except BaseException:
        print(f"criterion {num:02d} {title}: FAIL")
        raise
    print(f"criterion {num:02d} {title}: PASS")


def test_criterion_01_cross_trial_augmentation_totals():
    """Augmenting the reference marginals reproduces the published totals."""
    with verdict(1, "cross-trial augmentation totals", budget_s=1.0):
        trials = load_packaged_protocols()
        eligible = {"16-323": 387, "18-486": 56, "19-300": 167,
                    "19-410": 29, "21-283": 27, "22-259": 30}
        original_negative = {"16-323": 13, "18-486": 5, "19-300": 5,
                             "19-410": 3, "21-283": 6, "22-259": 3}
        pairs = []
        seq = itertools.count()
        for trial_id, n in eligible.items():
            pairs += [LabeledPair(patient_id=f"P{next(seq):05d}",
                                  trial_id=trial_id, label=ELIGIBLE,
                                  label_source="Original")
                      for _ in range(n)]
        for trial_id, n in original_negative.items():
            pairs += [LabeledPair(patient_id=f"P{next(seq):05d}",
                                  trial_id=trial_id, label=NOT_ELIGIBLE,
                                  label_source="Original")
                      for _ in range(n)]
        assert len(pairs) == 731

        augmented = augment_cross_trial(pairs, trials)
        added = [p for p in augmented if p.label_source == "CrossTrial"]
        per_trial = {t.id: 0 for t in trials}
        for p in added:
            assert p.label is NOT_ELIGIBLE
            per_trial[p.trial_id] += 1
        assert per_trial == {"16-323": 86, "19-300": 86, "19-410": 86,
                             "21-283": 86, "18-486": 610, "22-259": 610}
        assert len(added) == 1564
        assert len(augmented) == 2295


def naive_rule(kinds, statuses):
    """Independent restatement of the patient-level eligibility rule."""
    disqualifying = qualifying = unable = 0
    for kind, status in zip(kinds, statuses):
        if status is CriterionStatus.UNABLE_TO_DETERMINE:
            unable += 1
        elif kind is CriterionKind.INCLUSION:
            if status is CriterionStatus.MET:
                qualifying += 1
            else:
                disqualifying += 1
        else:
            if status is CriterionStatus.MET:
                disqualifying += 1
            else:
                qualifying += 1
    determination = NOT_ELIGIBLE if disqualifying >= 1 else ELIGIBLE
    return determination, disqualifying, qualifying, unable


def test_criterion_02_eligibility_rule_oracle():
    """Exhaustive agreement with a brute-force evaluator up to 6 criteria."""
    with verdict(2, "eligibility rule matches brute force", budget_s=10.0):
        checked = 0
        for n in range(1, 7):
            for kinds in itertools.product(
                    [CriterionKind.INCLUSION, CriterionKind.EXCLUSION],
                    repeat=n):
                trial = Trial(id="T", nct_id="N", criteria=tuple(
                    Criterion(id=f"c{i}", kind=k, text="t")
                    for i, k in enumerate(kinds)))
                for statuses in itertools.product(
                        [CriterionStatus.MET, CriterionStatus.NOT_MET,
                         CriterionStatus.UNABLE_TO_DETERMINE], repeat=n):
                    assessments = [CriterionAssessment(
                        criterion_id=f"c{i}", kind=k.value, final_status=s,
                        routed_specialties=(), opinions=(), adjudication="",
                        short_circuited=True)
                        for i, (k, s) in enumerate(zip(kinds, statuses))]
                    report = determine(trial, assessments, "P")
                    want = naive_rule(kinds, statuses)
                    got = (report.determination, report.disqualifying_count,
                           report.tallies.qualifying, report.tallies.unable)
                    assert got == want, (kinds, statuses)
                    checked += 1
        assert checked == sum(6 ** n for n in range(1, 7))


def test_criterion_03_chunking_properties():
    """Window arithmetic holds on 1,000 random documents of 1-10,000 tokens."""
    with verdict(3, "chunking invariants on random documents", budget_s=30.0):
        rng = random.Random(303)
        tokenizer = load_tokenizer("whitespace")
        config = ChunkingConfig(chunk_tokens=500, overlap_tokens=50)
        stride = config.stride
        sizes = [1, 10_000] + [rng.randint(1, 10_000) for _ in range(998)]
        for doc_num, size in enumerate(sizes):
            tokens = [f"w{rng.randrange(500)}" for _ in range(size)]
            doc = PatientDocument(doc_id=f"D{doc_num}", patient_id="P1",
                                  note_type="Progress Note",
                                  created_date=date(2021, 1, 1),
                                  text=" ".join(tokens))
            chunks = chunk_document(doc, tokenizer, config)
            assert chunks, size
            for i, chunk in enumerate(chunks):
                assert chunk.chunk_index == i
                assert chunk.token_start == i * stride
                assert chunk.token_end == min(chunk.token_start + 500, size)
                if i < len(chunks) - 1:
                    assert chunk.token_end < size
                assert tokenizer.encode(chunk.text) == \
                    tokens[chunk.token_start:chunk.token_end]
                if i > 0:
                    prev = chunks[i - 1]
                    shared = tokens[chunk.token_start:prev.token_end]
                    assert len(shared) == 50
                    assert chunk.token_start <= prev.token_end
            assert chunks[0].token_start == 0
            assert chunks[-1].token_end == size


def test_criterion_04_retrieval_matches_exhaustive_scan():
    """Top-10 search equals a brute-force cosine scan on 100 random stores."""
    with verdict(4, "retrieval equals exhaustive scan", budget_s=60.0):
        rng = random.Random(44)
        embedder = HashEmbedder(32)
        config = RetrievalConfig(k=10)
        sizes = [1, 5_000] + [
            int(math.exp(rng.uniform(0.0, math.log(5_000))))
            for _ in range(98)]
        from test_vectorstore import make_chunk
        for store_num, size in enumerate(sizes):
            # small text vocabulary so duplicate embeddings (true ties) occur
            texts = [f"excerpt {rng.randrange(max(2, size // 3))}"
                     for _ in range(size)]
            chunks = [make_chunk(doc_id=f"D{i:04d}", text=t)
                      for i, t in enumerate(texts)]
            store = build_store(chunks, embedder).store
            query = embedder.embed_texts([f"query {store_num}"])[0]

            results = search(store, query, config)

            sims = []
            for embedded in store.chunks:
                vec = embedded.embedding
                norm = np.linalg.norm(vec) * np.linalg.norm(query)
                sim = float(np.dot(vec, query) / norm) if norm else -1.0
                sims.append((-sim, embedded.doc_id, embedded.chunk_index, sim))
            sims.sort()
            expected = sims[:min(10, size)]

            assert [(r[0].doc_id, r[0].chunk_index) for r in results] == \
                [(doc_id, idx) for _, doc_id, idx, _ in expected]
            for got, (_, _, _, want_sim) in zip(results, expected):
                assert abs(got[1] - want_sim) <= 1e-12


def wilson_closed_form(k, n, confidence):
    """Independent derivation: roots of (p_hat - p)^2 = z^2 p(1-p)/n."""
    z = scipy_stats.norm.ppf(0.5 + confidence / 2.0)
    p = k / n
    a = 1 + z * z / n
    b = -(2 * p + z * z / n)
    c = p * p
    disc = math.sqrt(b * b - 4 * a * c)
    return (-b - disc) / (2 * a), (-b + disc) / (2 * a)


def test_criterion_05_wilson_interval_oracle():
    """1,000 random triples agree with the closed form to 1e-9."""
    with verdict(5, "Wilson interval matches closed form", budget_s=10.0):
        rng = random.Random(55)
        worst = 0.0
        for _ in range(1_000):
            n = rng.randint(1, 500)
            k = rng.randint(0, n)
            confidence = rng.uniform(0.5, 0.999)
            lo, hi = wilson_interval(k, n, confidence)
            ref_lo, ref_hi = wilson_closed_form(k, n, confidence)
            if k == 0:
                assert lo == 0.0
            else:
                worst = max(worst, abs(lo - ref_lo))
            if k == n:
                assert hi == 1.0
            else:
                worst = max(worst, abs(hi - ref_hi))
        assert worst <= 1e-9, worst
        assert wilson_interval(0, 7)[0] == 0.0
        assert wilson_interval(7, 7)[1] == 1.0


def test_criterion_06_scripted_runs_are_byte_identical(tmp_path, capsys):
    """Two scripted CLI runs over one workspace write identical artifacts."""
    with verdict(6, "scripted runs byte-identical", budget_s=60.0):
        ws = tmp_path / "ws"
        assert cli_main(["init-synthetic", "--workspace", str(ws)]) == 0
        for run_id in ("first", "second"):
            assert cli_main(["run", "--workspace", str(ws),
                             "--backend", "scripted",
                             "--run-id", run_id]) == 0
        capsys.readouterr()

        dir_a = ws / "runs" / "first"
        dir_b = ws / "runs" / "second"
        files = sorted(p.relative_to(dir_a) for p in dir_a.rglob("*.json"))
        assert files == sorted(p.relative_to(dir_b)
                               for p in dir_b.rglob("*.json"))
        assert any(p.name == "ledger.json" for p in files)
        assert sum(1 for p in files if p.name != "ledger.json") == 18
        for rel in files:
            assert (dir_a / rel).read_bytes() == (dir_b / rel).read_bytes(), rel


def test_criterion_07_kb_injection_costs_more(cohort):
    """Guidance in prompts strictly raises prompt tokens and total cost."""
    with verdict(7, "KB injection raises prompt cost", budget_s=60.0):
        prices = PriceTable(default_input=2e-6, default_output=6e-6)
        pairs = [(p.patient_id, p.trial_id) for p in cohort.pairs]

        def run(config, kb):
            pipeline = Pipeline(ingest(cohort.documents), cohort.trials,
                                config, ScriptedBackend(cohort.rules), prices,
                                kb=kb)
            records = pipeline.run_many(pairs).ledger_records
            return (sum(r["prompt_tokens"] for r in records),
                    sum(r["completion_tokens"] for r in records),
                    sum(r["cost"] for r in records), len(records))

        plain = run(RunConfig(), KnowledgeBase())
        guided = run(RunConfig(use_kb=True), cohort.seed_kb())
        assert guided[3] == plain[3], "call structure should not change"
        assert guided[1] == plain[1], "padded replies keep completions equal"
        assert guided[0] > plain[0]
        assert guided[2] > plain[2]


def test_criterion_08_triage_workflow_recovers_false_negatives(
        cohort, make_pipeline):
    """Threshold-2 review with a perfect reviewer leaves no false negatives."""
    with verdict(8, "triage recovers false negatives", budget_s=60.0):
        pipeline = make_pipeline()
        result = pipeline.run_many([(p.patient_id, p.trial_id)
                                    for p in cohort.pairs])
        reports = [r.report for r in result.results]
        labels = {(p.trial_id, p.patient_id): p.label for p in cohort.pairs}

        # every machine false negative sits at a disqualifying count <= 2
        false_negatives = [r for r in reports
                           if r.determination is NOT_ELIGIBLE
                           and labels[(r.trial_id, r.patient_id)] is ELIGIBLE]
        assert false_negatives
        assert all(r.disqualifying_count <= 2 for r in false_negatives)

        policy = TriagePolicy(threshold=2)
        queue = select_for_review(reports, policy)
        assert review_fraction(reports, policy) < 1.0

        decided = perfect_reviewer_decisions(queue, cohort, KnowledgeBase())
        outcomes = finalize(reports, decided, policy)
        for key, outcome in outcomes.items():
            assert outcome.final_determination is labels[key], key

        # raising the threshold only ever widens the queue
        keys_by_threshold = [
            {(i.trial_id, i.patient_id)
             for i in select_for_review(reports, TriagePolicy(threshold=t))}
            for t in range(1, 7)]
        for narrower, wider in zip(keys_by_threshold, keys_by_threshold[1:]):
            assert narrower <= wider


def test_criterion_09_flagged_trial_needs_no_model_calls():
    """A fully flagged trial resolves without any backend traffic."""
    with verdict(9, "flagged criteria skip the model", budget_s=10.0):
        trial = Trial(id="F-1", nct_id="NCT-F1", criteria=(
            Criterion(id="i1", kind=CriterionKind.INCLUSION,
                      text="always satisfied", flag=CriterionFlag.VACUOUS),
            Criterion(id="i2", kind=CriterionKind.INCLUSION,
                      text="always satisfied too", flag=CriterionFlag.VACUOUS),
            Criterion(id="i3", kind=CriterionKind.INCLUSION,
                      text="needs clinical judgment",
                      flag=CriterionFlag.REQUIRES_HUMAN_REVIEW),
            Criterion(id="e1", kind=CriterionKind.EXCLUSION,
                      text="needs clinical judgment too",
                      flag=CriterionFlag.REQUIRES_HUMAN_REVIEW),
        ))
        embedder = HashEmbedder(16)
        tokenizer = load_tokenizer("whitespace")
        doc = PatientDocument(doc_id="D1", patient_id="P1",
                              note_type="Pathology Report",
                              created_date=date(2021, 1, 1),
                              text="surgical pathology findings reviewed")
        chunks = chunk_document(doc, tokenizer,
                                ChunkingConfig(chunk_tokens=10,
                                               overlap_tokens=2))
        store = build_store(chunks, embedder,
                            specialty=Specialty.PATHOLOGY).store

        ledger = CostLedger()
        # a scripted backend with zero rules fails loudly on any call
        gateway = Gateway(ScriptedBackend(()), prices=PriceTable(),
                          ledger=ledger)
        orchestrator = Orchestrator(gateway, embedder,
                                    config=OrchestratorConfig())
        assessments = orchestrator.assess_trial(
            trial, {Specialty.PATHOLOGY: store})

        statuses = {a.criterion_id: a.final_status for a in assessments}
        assert statuses == {"i1": CriterionStatus.MET,
                            "i2": CriterionStatus.MET,
                            "i3": CriterionStatus.UNABLE_TO_DETERMINE,
                            "e1": CriterionStatus.UNABLE_TO_DETERMINE}
        assert all(a.short_circuited for a in assessments)
        assert ledger.to_records() == []

        report = determine(trial, assessments, "P1")
        assert report.determination is ELIGIBLE
        assert report.tallies.unable == 2


def test_criterion_10_packaged_protocol_fixture_counts():
    """The packaged six-trial fixture matches its reference counts."""
    with verdict(10, "protocol fixture counts", budget_s=10.0):
        expected = {
            "16-323": ("NCT02603341", MetastaticGroup.EXCLUDED, 12, 5, 3, 2),
            "18-486": ("NCT03808337", MetastaticGroup.REQUIRED, 12, 6, 0, 2),
            "19-300": ("NCT04084730", MetastaticGroup.EXCLUDED, 9, 15, 0, 2),
            "19-410": ("NCT03488693", MetastaticGroup.EXCLUDED, 16, 10, 2, 4),
            "21-283": ("NCT04852887", MetastaticGroup.EXCLUDED, 17, 22, 1, 3),
            "22-259": ("NCT05534438", MetastaticGroup.REQUIRED, 7, 4, 0, 2),
        }
        trials = {t.id: t for t in load_packaged_protocols()}
        assert set(trials) == set(expected)
        for trial_id, (nct, group, inc, exc, vac, rhr) in expected.items():
            trial = trials[trial_id]
            assert trial.nct_id == nct
            assert trial.metastatic_group is group
            kinds = [c.kind for c in trial.criteria]
            flags = [c.flag for c in trial.criteria]
            assert kinds.count(CriterionKind.INCLUSION) == inc
            assert kinds.count(CriterionKind.EXCLUSION) == exc
            assert flags.count(CriterionFlag.VACUOUS) == vac
            assert flags.count(CriterionFlag.REQUIRES_HUMAN_REVIEW) == rhr
            assert len(trial.criteria) == inc + exc

        all_criteria = [c for t in trials.values() for c in t.criteria]
        assert len(all_criteria) == 135
        assert sum(c.kind is CriterionKind.INCLUSION
                   for c in all_criteria) == 73
        assert sum(c.kind is CriterionKind.EXCLUSION
                   for c in all_criteria) == 62
        assert sum(c.flag is CriterionFlag.VACUOUS for c in all_criteria) == 6
        assert sum(c.flag is CriterionFlag.REQUIRES_HUMAN_REVIEW
                   for c in all_criteria) == 15
