"""Human review loop: triage, overrides, and the knowledge base payoff.

The cohort here has injected assessment errors, so some truly eligible
patients come back NotEligible at low disqualifying counts.  Those are
exactly the cases the triage queue surfaces.  A simulated reviewer who
always recovers the ground truth confirms the true negatives, overrides
the false ones, and every override note lands in the knowledge base.
Rerunning with that knowledge base injected fixes the same mistakes at
the source, for a measurable prompt-token premium.
"""

from trialscreen.corpus import ingest
from trialscreen.eligibility import Determination
from trialscreen.gateway import PriceTable, ScriptedBackend
from trialscreen.kb import KnowledgeBase
from trialscreen.pipeline import Pipeline, RunConfig
from trialscreen.synthetic import (CohortSpec, generate_synthetic_cohort,
                                   perfect_reviewer_decisions)
from trialscreen.triage import (TriagePolicy, finalize, review_fraction,
                                select_for_review)

PRICES = PriceTable(default_input=2e-6, default_output=6e-6)


def run(cohort, config, kb):
    pipeline = Pipeline(ingest(cohort.documents), cohort.trials, config,
                        ScriptedBackend(cohort.rules), PRICES, kb=kb)
    return pipeline.run_many([(p.patient_id, p.trial_id)
                              for p in cohort.pairs])


def accuracy(results, labels):
    hits = sum(1 for r in results
               if r.report.determination is labels[(r.trial_id, r.patient_id)])
    return hits / len(results)


def main():
    cohort = generate_synthetic_cohort(CohortSpec(error_rate=0.5), seed=7)
    labels = {(p.trial_id, p.patient_id): p.label for p in cohort.pairs}

    first = run(cohort, RunConfig(), KnowledgeBase())
    print(f"first pass accuracy: {accuracy(first.results, labels):.3f} "
          f"({len(cohort.injected_errors)} errors injected)")

    policy = TriagePolicy(threshold=2)
    reports = [r.report for r in first.results]
    queue = select_for_review(reports, policy)
    print(f"triage queue: {len(queue)} of {len(reports)} reports "
          f"(review fraction {review_fraction(reports, policy):.2f})")
    for item in queue:
        truth = labels[(item.trial_id, item.patient_id)]
        tag = ("false negative" if truth is Determination.POTENTIALLY_ELIGIBLE
               else "true negative")
        print(f"  count {item.disqualifying_count}  {item.trial_id}  "
              f"{item.patient_id}  <- {tag}")

    kb = KnowledgeBase()
    decided = perfect_reviewer_decisions(queue, cohort, kb)
    outcomes = finalize(reports, decided, policy)
    recovered = sum(
        1 for key, outcome in outcomes.items()
        if outcome.final_determination is labels[key])
    print(f"after review: {recovered}/{len(outcomes)} final outcomes correct; "
          f"knowledge base grew to {kb.version} entries")

    second = run(cohort, RunConfig(use_kb=True), kb)
    print(f"rerun with the knowledge base: "
          f"accuracy {accuracy(second.results, labels):.3f}")

    def totals(result):
        records = result.ledger_records
        return (sum(r["prompt_tokens"] for r in records),
                sum(r["completion_tokens"] for r in records),
                sum(r["cost"] for r in records))

    p1, c1, cost1 = totals(first)
    p2, c2, cost2 = totals(second)
    print()
    print("cost of injecting the knowledge base into expert prompts:")
    print(f"  prompt tokens     {p1:7d} -> {p2:7d}  (+{p2 - p1})")
    print(f"  completion tokens {c1:7d} -> {c2:7d}  (+{c2 - c1})")
    print(f"  total cost        ${cost1:.4f} -> ${cost2:.4f}")


if __name__ == "__main__":
    main()
