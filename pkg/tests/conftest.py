import pytest

from trialscreen.corpus import ingest
from trialscreen.gateway import PriceTable, ScriptedBackend
from trialscreen.kb import KnowledgeBase
from trialscreen.pipeline import Pipeline, RunConfig
from trialscreen.synthetic import CohortSpec, generate_synthetic_cohort


@pytest.fixture(scope="session")
def cohort():
    return generate_synthetic_cohort(CohortSpec(error_rate=0.5), seed=7)


@pytest.fixture(scope="session")
def clean_cohort():
    """Same cohort shape with no injected assessment errors."""
    return generate_synthetic_cohort(CohortSpec(error_rate=0.0), seed=7)


@pytest.fixture()
def make_pipeline(cohort):
    def build(config: RunConfig = RunConfig(), kb: KnowledgeBase = None,
              the_cohort=None):
        c = the_cohort if the_cohort is not None else cohort
        return Pipeline(ingest(c.documents), c.trials, config,
                        ScriptedBackend(c.rules),
                        PriceTable(default_input=2e-6, default_output=6e-6),
                        kb=kb if kb is not None else KnowledgeBase())
    return build
