"""Screen a synthetic cohort end to end and inspect one report.

Builds a deterministic cohort (documents, ground truth, and scripted model
replies all derived from one seed), runs every patient-trial pair through
the multi-expert pipeline, and prints the audit trail for one criterion:
which specialties were consulted, what evidence they retrieved, and how
the final status was reached.
"""

from trialscreen.corpus import ingest
from trialscreen.gateway import PriceTable, ScriptedBackend
from trialscreen.pipeline import Pipeline, RunConfig
from trialscreen.synthetic import CohortSpec, generate_synthetic_cohort


def main():
    cohort = generate_synthetic_cohort(CohortSpec(error_rate=0.0), seed=7)
    pipeline = Pipeline(ingest(cohort.documents), cohort.trials, RunConfig(),
                        ScriptedBackend(cohort.rules),
                        PriceTable(default_input=2e-6, default_output=6e-6))

    pairs = [(p.patient_id, p.trial_id) for p in cohort.pairs]
    result = pipeline.run_many(pairs)

    print(f"screened {len(result.results)} patient-trial pairs "
          f"(config {result.config_digest[:12]})")
    print()
    for r in result.results:
        print(f"  {r.trial_id}  {r.patient_id}  "
              f"{r.report.determination.value:20s} "
              f"disqualifying={r.report.disqualifying_count}")

    report = result.results[0].report
    assessed = next(a for a in report.assessments if not a.short_circuited)
    print()
    print(f"audit trail for {report.trial_id} / {report.patient_id}, "
          f"criterion {assessed.criterion_id!r}:")
    print(f"  routed to: {', '.join(assessed.routed_specialties)}")
    for opinion in assessed.opinions:
        print(f"  {opinion.specialty} says {opinion.status.value}: "
              f"{opinion.explanation.splitlines()[0][:70]}")
        for ev in opinion.evidence[:2]:
            print(f"    evidence {ev.doc_id} chunk {ev.chunk_index} "
                  f"(sim {ev.similarity:.3f}): {ev.text[:60]}...")
    print(f"  final status: {assessed.final_status.value}")

    spent = sum(r["cost"] for r in result.ledger_records)
    calls = len(result.ledger_records)
    print()
    print(f"model usage: {calls} calls, ${spent:.4f} at the demo price table")


if __name__ == "__main__":
    main()
