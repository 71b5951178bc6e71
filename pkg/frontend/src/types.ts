// Wire types for the prescreening service API. Every payload the console
// consumes is validated at the boundary so a drifting server fails loudly
// instead of rendering garbage.
import { z } from "zod";

export const CriterionStatusSchema = z.enum([
  "met",
  "not_met",
  "unable_to_determine",
]);
export type CriterionStatus = z.infer<typeof CriterionStatusSchema>;

export const CriterionKindSchema = z.enum(["inclusion", "exclusion"]);
export type CriterionKind = z.infer<typeof CriterionKindSchema>;

export const DeterminationSchema = z.enum(["PotentiallyEligible", "NotEligible"]);
export type Determination = z.infer<typeof DeterminationSchema>;

export const ErrorModeSchema = z.enum([
  "domain_knowledge",
  "logical",
  "missing_information",
  "irrelevant_criterion",
  "other",
]);
export type ErrorMode = z.infer<typeof ErrorModeSchema>;

export const EvidenceRefSchema = z.object({
  doc_id: z.string(),
  note_type: z.string(),
  created_date: z.string(),
  chunk_index: z.number().int(),
  token_start: z.number().int(),
  token_end: z.number().int(),
  similarity: z.number(),
  text: z.string(),
});
export type EvidenceRef = z.infer<typeof EvidenceRefSchema>;

export const ExpertOpinionSchema = z.object({
  specialty: z.string(),
  status: CriterionStatusSchema,
  explanation: z.string(),
  evidence: z.array(EvidenceRefSchema),
});
export type ExpertOpinion = z.infer<typeof ExpertOpinionSchema>;

export const AssessmentSchema = z.object({
  criterion_id: z.string(),
  kind: CriterionKindSchema,
  final_status: CriterionStatusSchema,
  routed_specialties: z.array(z.string()),
  opinions: z.array(ExpertOpinionSchema),
  adjudication: z.string(),
  short_circuited: z.boolean(),
});
export type Assessment = z.infer<typeof AssessmentSchema>;

export const TalliesSchema = z.object({
  qualifying: z.number().int(),
  disqualifying: z.number().int(),
  unable: z.number().int(),
});
export type Tallies = z.infer<typeof TalliesSchema>;

export const ReportSchema = z.object({
  format: z.literal("eligibility-report-v1"),
  patient_id: z.string(),
  trial_id: z.string(),
  determination: DeterminationSchema,
  disqualifying_count: z.number().int(),
  tallies: TalliesSchema,
  config_digest: z.string(),
  kb_version: z.number().int(),
  assessments: z.array(AssessmentSchema),
  ledger: z.array(z.unknown()),
});
export type Report = z.infer<typeof ReportSchema>;

export const TrialSummarySchema = z.object({
  trial_id: z.string(),
  nct_id: z.string(),
  metastatic_group: z.string(),
  criterion_count: z.number().int(),
});
export type TrialSummary = z.infer<typeof TrialSummarySchema>;

export const TrialDetailSchema = z.object({
  trial_id: z.string(),
  nct_id: z.string(),
  metastatic_group: z.string(),
  criteria: z.array(
    z.object({
      criterion_id: z.string(),
      kind: CriterionKindSchema,
      flag: z.string(),
      text: z.string(),
    }),
  ),
});
export type TrialDetail = z.infer<typeof TrialDetailSchema>;

export const RunJobSchema = z.object({
  job_id: z.string(),
  state: z.enum(["Queued", "Running", "Done", "Failed"]),
  progress: z.object({
    done: z.number().int(),
    failed: z.number().int(),
    total: z.number().int(),
  }),
  pairs: z.array(z.object({ patient_id: z.string(), trial_id: z.string() })),
  config_digest: z.string(),
  kb_version: z.number().int(),
  failures: z.array(z.record(z.string(), z.unknown())),
});
export type RunJob = z.infer<typeof RunJobSchema>;

export const QueueItemSchema = z.object({
  job_id: z.string(),
  trial_id: z.string(),
  patient_id: z.string(),
  disqualifying_count: z.number().int(),
  state: z.enum(["Pending", "Confirmed", "Overridden"]),
  version: z.number().int(),
  claimed_by: z.string(),
  reviewer_id: z.string(),
  review_duration_s: z.number().nullable(),
  determination: DeterminationSchema,
});
export type QueueItem = z.infer<typeof QueueItemSchema>;

export const QueueSchema = z.object({
  job_id: z.string(),
  items: z.array(QueueItemSchema),
});
export type Queue = z.infer<typeof QueueSchema>;

export const DecisionResponseSchema = QueueItemSchema.extend({
  disqualifying_count_after: z.number().int(),
  tallies: TalliesSchema,
});
export type DecisionResponse = z.infer<typeof DecisionResponseSchema>;

export const EvidencePayloadSchema = z.object({
  criterion_id: z.string(),
  short_circuited: z.boolean(),
  evidence: z.array(
    z.object({ specialty: z.string(), snippets: z.array(EvidenceRefSchema) }),
  ),
});
export type EvidencePayload = z.infer<typeof EvidencePayloadSchema>;

export const KbEntrySchema = z.object({
  entry_id: z.number().int(),
  text: z.string(),
  error_mode: ErrorModeSchema,
  trial_id: z.string(),
  criterion_id: z.string(),
  author: z.string(),
  created_at: z.string(),
});
export type KbEntry = z.infer<typeof KbEntrySchema>;

export const KbSchema = z.object({
  version: z.number().int(),
  entries: z.array(KbEntrySchema),
});
export type Kb = z.infer<typeof KbSchema>;

export interface OverrideRequest {
  criterion_id: string;
  new_status: CriterionStatus;
  note: string;
  error_mode: ErrorMode;
}

export type DecisionAction = "confirm" | "override";
