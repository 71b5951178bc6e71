"""Tour the HTTP service: submit a run, triage a case, score the run.

Drives the FastAPI app in process with the standard test client, so the
tour needs no open port; `trialscreen serve` exposes the same app over
real HTTP.  Every response carries the active config digest and knowledge
base version in headers, and decisions are guarded by optimistic
versioning plus per-reviewer claims.
"""

import warnings

warnings.filterwarnings(
    "ignore", message="Using `httpx` with `starlette.testclient`")

from fastapi.testclient import TestClient

from trialscreen.corpus import ingest
from trialscreen.gateway import PriceTable, ScriptedBackend
from trialscreen.pipeline import Pipeline, RunConfig
from trialscreen.service import ServiceState, create_app
from trialscreen.synthetic import CohortSpec, generate_synthetic_cohort
from trialscreen.triage import TriagePolicy

AUTH = {"Authorization": "Bearer demo-token"}


def main():
    cohort = generate_synthetic_cohort(CohortSpec(error_rate=0.5), seed=7)
    pipeline = Pipeline(ingest(cohort.documents), cohort.trials, RunConfig(),
                        ScriptedBackend(cohort.rules),
                        PriceTable(default_input=2e-6, default_output=6e-6))
    clock = iter(range(0, 10_000, 42))  # stand-in for time.time in the demo
    state = ServiceState(pipeline, auth_token="demo-token",
                         policy=TriagePolicy(threshold=2),
                         now=lambda: float(next(clock)), run_in_thread=False)
    client = TestClient(create_app(state))

    denied = client.get("/api/v1/trials")
    print(f"without a token: HTTP {denied.status_code}")
    trials = client.get("/api/v1/trials", headers=AUTH)
    print(f"with a token:    HTTP {trials.status_code}, "
          f"trials {[t['trial_id'] for t in trials.json()]}")
    print(f"response headers: config {trials.headers['X-Config-Digest'][:12]}, "
          f"kb v{trials.headers['X-KB-Version']}")

    pairs = [{"patient_id": p.patient_id, "trial_id": p.trial_id}
             for p in cohort.pairs]
    submitted = client.post("/api/v1/runs", headers=AUTH,
                            json={"pairs": pairs, "run_id": "tour"})
    job = client.get("/api/v1/runs/tour", headers=AUTH).json()
    print()
    print(f"run submitted (HTTP {submitted.status_code}): state {job['state']}, "
          f"{job['progress']['done']} done, {job['progress']['failed']} failed")

    queue = client.get("/api/v1/triage/queue", headers=AUTH,
                       params={"job_id": "tour"}).json()["items"]
    print(f"triage queue holds {len(queue)} near-miss reports")
    item = queue[0]
    claim = {"job_id": "tour", "trial_id": item["trial_id"],
             "patient_id": item["patient_id"], "version": item["version"],
             "reviewer_id": "crc-1"}
    client.post("/api/v1/triage/claim", headers=AUTH, json=claim)
    rival = client.post("/api/v1/triage/claim", headers=AUTH,
                        json={**claim, "reviewer_id": "crc-2"})
    print(f"second reviewer claiming the same case: HTTP {rival.status_code}")
    decided = client.post("/api/v1/triage/decision", headers=AUTH,
                          json={**claim, "action": "confirm"}).json()
    print(f"decision recorded: {decided['state']}, "
          f"version {decided['version']}, "
          f"review took {decided['review_duration_s']:.0f}s")

    labels = [{"patient_id": p.patient_id, "trial_id": p.trial_id,
               "label": p.label.value} for p in cohort.pairs]
    scored = client.post("/api/v1/evaluations", headers=AUTH,
                         json={"job_id": "tour", "labels": labels}).json()
    cm = scored["confusion"]
    acc = scored["metrics"]["accuracy"]
    print()
    print(f"evaluation: tp={cm['tp']} fn={cm['fn']} fp={cm['fp']} tn={cm['tn']}")
    print(f"accuracy {acc['point']:.3f}  "
          f"95% CI [{acc['lo']:.3f}, {acc['hi']:.3f}]")


if __name__ == "__main__":
    main()
