// Hand-built payloads matching the service wire format, used by the unit
// tests in place of a live server.
import {
  Assessment,
  CriterionKind,
  CriterionStatus,
  EvidenceRef,
  ExpertOpinion,
  Queue,
  QueueItem,
  Report,
} from "../src/types.js";

export function evidenceRef(overrides: Partial<EvidenceRef> = {}): EvidenceRef {
  return {
    doc_id: "D0001",
    note_type: "Pathology Report",
    created_date: "2021-03-01",
    chunk_index: 0,
    token_start: 0,
    token_end: 120,
    similarity: 0.42,
    text: "specimen shows invasive carcinoma, grade 2",
    ...overrides,
  };
}

export function opinion(overrides: Partial<ExpertOpinion> = {}): ExpertOpinion {
  return {
    specialty: "Pathology",
    status: "met",
    explanation: "pathology confirms the requirement",
    evidence: [evidenceRef()],
    ...overrides,
  };
}

export function assessment(
  criterionId: string,
  kind: CriterionKind,
  status: CriterionStatus,
  overrides: Partial<Assessment> = {},
): Assessment {
  return {
    criterion_id: criterionId,
    kind,
    final_status: status,
    routed_specialties: ["Pathology"],
    opinions: [opinion({ status })],
    adjudication: "unanimous",
    short_circuited: false,
    ...overrides,
  };
}

/**
 * A NotEligible case with one disqualifying criterion: qualifying i1 and
 * e1, disqualifying i2, unable e2 (short-circuited human-review flag).
 */
export function sampleReport(overrides: Partial<Report> = {}): Report {
  return {
    format: "eligibility-report-v1",
    patient_id: "P0002",
    trial_id: "90-001",
    determination: "NotEligible",
    disqualifying_count: 1,
    tallies: { qualifying: 2, disqualifying: 1, unable: 1 },
    config_digest: "c0ffee00c0ffee00",
    kb_version: 0,
    assessments: [
      assessment("90-001-i1", "inclusion", "met", {
        routed_specialties: ["Pathology", "Radiology"],
        opinions: [
          opinion({
            evidence: [
              evidenceRef(),
              evidenceRef({ doc_id: "D0002", chunk_index: 1,
                            note_type: "Progress Note",
                            created_date: "2021-04-02" }),
            ],
          }),
          opinion({
            specialty: "Radiology",
            explanation: "imaging agrees",
            evidence: [
              evidenceRef({ doc_id: "D0003", note_type: "Radiology Report",
                            created_date: "2021-03-15" }),
            ],
          }),
        ],
      }),
      assessment("90-001-i2", "inclusion", "not_met", {
        opinions: [
          opinion({ status: "not_met",
                    explanation: "no measurable disease documented" }),
        ],
      }),
      assessment("90-001-e1", "exclusion", "not_met"),
      assessment("90-001-e2", "exclusion", "unable_to_determine", {
        routed_specialties: [],
        opinions: [],
        adjudication: "requires human review",
        short_circuited: true,
      }),
    ],
    ledger: [],
    ...overrides,
  };
}

export function queueItem(overrides: Partial<QueueItem> = {}): QueueItem {
  return {
    job_id: "j1",
    trial_id: "90-001",
    patient_id: "P0002",
    disqualifying_count: 1,
    state: "Pending",
    version: 0,
    claimed_by: "",
    reviewer_id: "",
    review_duration_s: null,
    determination: "NotEligible",
    ...overrides,
  };
}

export function sampleQueue(overrides: Partial<Queue> = {}): Queue {
  return {
    job_id: "j1",
    items: [
      queueItem(),
      queueItem({ patient_id: "P0005" }),
      queueItem({ trial_id: "90-002", patient_id: "P0011",
                  disqualifying_count: 2 }),
    ],
    ...overrides,
  };
}
