"""Retrieval-grounded multi-agent clinical trial eligibility prescreening.

The package is organized as a library of composable pieces:

- ``protocol``: trial protocols, criteria, and the flag taxonomy that
  short-circuits automated assessment.
- ``corpus``: longitudinal patient documents, specialty routing, and
  determination-date cutoffs.
- ``chunking`` / ``vectorstore``: sliding-window tokenization, embedding,
  and deterministic top-k cosine retrieval.
- ``gateway``: provider-agnostic chat completion with scripted and
  record/replay backends plus token cost accounting.
- ``orchestrator``: the per-criterion assessment graph (coordinator,
  expert panel, adjudicator).
- ``eligibility``: the rules-based patient-level determination.
- ``kb``: the append-only human-feedback knowledge base.
- ``triage``: the human review queue over low-disqualifying-count
  predicted negatives.
- ``evaluation`` / ``synthetic``: dataset construction, metrics with
  Wilson intervals, and the deterministic synthetic cohort generator.
- ``pipeline`` / ``service`` / ``cli``: end-to-end runs, the HTTP review
  API, and the operator command line.
"""

__version__ = "0.1.0"
