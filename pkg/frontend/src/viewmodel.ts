// Pure view-model builders for the reviewer console. Nothing here decides
// eligibility: determinations, tallies, and statuses all arrive from the
// server and are reshaped for display only.
import {
  Assessment,
  CriterionKind,
  CriterionStatus,
  Determination,
  DecisionResponse,
  OverrideRequest,
  Queue,
  QueueItem,
  Report,
  Tallies,
} from "./types.js";

export const DISCLAIMER =
  "This assessment is made by AI and may contain inaccuracies";

/** One color per assessment status, used for row chips and labels. */
export const STATUS_COLORS: Record<CriterionStatus, string> = {
  met: "green",
  not_met: "red",
  unable_to_determine: "amber",
};

export const STATUS_LABELS: Record<CriterionStatus, string> = {
  met: "Met",
  not_met: "Not Met",
  unable_to_determine: "Unable To Determine",
};

export type RowEffect = "qualifying" | "disqualifying" | "unable";

/** How a criterion status counts toward the banner, given its kind. */
export function rowEffect(kind: CriterionKind, status: CriterionStatus): RowEffect {
  if (status === "unable_to_determine") return "unable";
  if (kind === "inclusion") return status === "met" ? "qualifying" : "disqualifying";
  return status === "met" ? "disqualifying" : "qualifying";
}

export function determinationLabel(determination: Determination): string {
  return determination === "PotentiallyEligible" ? "Eligible" : "Ineligible";
}

/** Mask an identifier for display; the reveal toggle bypasses this. */
export function redactId(identifier: string): string {
  if (identifier.length <= 2) return "***";
  return `${identifier[0]}***${identifier[identifier.length - 1]}`;
}

export interface ExplanationView {
  specialty: string;
  status: CriterionStatus;
  statusLabel: string;
  explanation: string;
}

export interface CriterionRow {
  criterionId: string;
  kind: CriterionKind;
  status: CriterionStatus;
  statusLabel: string;
  color: string;
  effect: RowEffect;
  shortCircuited: boolean;
  adjudication: string;
  explanations: ExplanationView[];
  /** Total retrieved snippets across experts; 0 disables the evidence link. */
  evidenceCount: number;
  overridden: boolean;
}

export interface BannerView {
  tallies: Tallies;
  determination: Determination;
  statusLabel: string;
  disqualifyingCount: number;
}

export interface CaseView {
  patientId: string;
  trialId: string;
  /** Display form of the patient id; redacted unless identifiers are revealed. */
  patientLabel: string;
  banner: BannerView;
  rows: CriterionRow[];
  disclaimer: string;
  technical: { configDigest: string; kbVersion: number };
  empty: boolean;
  emptyMessage: string;
}

export interface RenderOptions {
  revealIdentifiers?: boolean;
}

function rowFromAssessment(a: Assessment): CriterionRow {
  return {
    criterionId: a.criterion_id,
    kind: a.kind,
    status: a.final_status,
    statusLabel: STATUS_LABELS[a.final_status],
    color: STATUS_COLORS[a.final_status],
    effect: rowEffect(a.kind, a.final_status),
    shortCircuited: a.short_circuited,
    adjudication: a.adjudication,
    explanations: a.opinions.map((op) => ({
      specialty: op.specialty,
      status: op.status,
      statusLabel: STATUS_LABELS[op.status],
      explanation: op.explanation,
    })),
    evidenceCount: a.opinions.reduce((n, op) => n + op.evidence.length, 0),
    overridden: false,
  };
}

/** Build the case screen from a served report, one row per criterion. */
export function renderCase(report: Report, options: RenderOptions = {}): CaseView {
  const rows = report.assessments.map(rowFromAssessment);
  return {
    patientId: report.patient_id,
    trialId: report.trial_id,
    patientLabel: options.revealIdentifiers
      ? report.patient_id
      : redactId(report.patient_id),
    banner: {
      tallies: report.tallies,
      determination: report.determination,
      statusLabel: determinationLabel(report.determination),
      disqualifyingCount: report.disqualifying_count,
    },
    rows,
    disclaimer: DISCLAIMER,
    technical: {
      configDigest: report.config_digest,
      kbVersion: report.kb_version,
    },
    empty: rows.length === 0,
    emptyMessage: rows.length === 0 ? "This report contains no criteria." : "",
  };
}

/** Sum row effects; the banner must agree with this (server invariant). */
export function rowStatusSums(rows: CriterionRow[]): Tallies {
  const sums: Tallies = { qualifying: 0, disqualifying: 0, unable: 0 };
  for (const row of rows) {
    if (row.effect === "qualifying") sums.qualifying += 1;
    else if (row.effect === "disqualifying") sums.disqualifying += 1;
    else sums.unable += 1;
  }
  return sums;
}

export function bannerMatchesRows(view: CaseView): boolean {
  const sums = rowStatusSums(view.rows);
  return (
    sums.qualifying === view.banner.tallies.qualifying &&
    sums.disqualifying === view.banner.tallies.disqualifying &&
    sums.unable === view.banner.tallies.unable
  );
}

export interface SnippetView {
  chunkIndex: number;
  similarity: number;
  /** Verbatim server text; never trimmed or reflowed. */
  text: string;
}

export interface EvidenceDocView {
  docId: string;
  docLabel: string;
  noteType: string;
  createdDate: string;
  snippets: SnippetView[];
}

export interface EvidencePanel {
  criterionId: string;
  state: "snippets" | "empty";
  message: string;
  documents: EvidenceDocView[];
}

/** Group a criterion's retrieved snippets by source document. */
export function inspectEvidence(
  report: Report,
  criterionId: string,
  options: RenderOptions = {},
): EvidencePanel {
  const assessment = report.assessments.find((a) => a.criterion_id === criterionId);
  if (assessment === undefined) {
    return {
      criterionId,
      state: "empty",
      message: `No criterion ${criterionId} in this report.`,
      documents: [],
    };
  }
  if (assessment.short_circuited) {
    return {
      criterionId,
      state: "empty",
      message:
        "No AI evidence: this criterion was resolved by rule, without document review.",
      documents: [],
    };
  }
  const byDoc = new Map<string, EvidenceDocView>();
  for (const opinion of assessment.opinions) {
    for (const ref of opinion.evidence) {
      let doc = byDoc.get(ref.doc_id);
      if (doc === undefined) {
        const docId = options.revealIdentifiers ? ref.doc_id : redactId(ref.doc_id);
        doc = {
          docId,
          docLabel: `${ref.note_type} (${ref.created_date})`,
          noteType: ref.note_type,
          createdDate: ref.created_date,
          snippets: [],
        };
        byDoc.set(ref.doc_id, doc);
      }
      if (!doc.snippets.some((s) => s.chunkIndex === ref.chunk_index)) {
        doc.snippets.push({
          chunkIndex: ref.chunk_index,
          similarity: ref.similarity,
          text: ref.text,
        });
      }
    }
  }
  const documents = [...byDoc.values()];
  if (documents.length === 0) {
    return {
      criterionId,
      state: "empty",
      message: "No evidence snippets were retrieved for this criterion.",
      documents: [],
    };
  }
  return { criterionId, state: "snippets", message: "", documents };
}

/**
 * Refresh a case view from a decision response. The banner takes the
 * server's post-decision determination and tallies verbatim; rows named
 * in the accepted overrides are restated with their new status.
 */
export function applyDecision(
  view: CaseView,
  response: DecisionResponse,
  accepted: OverrideRequest[] = [],
): CaseView {
  const byCriterion = new Map(accepted.map((o) => [o.criterion_id, o.new_status]));
  const rows = view.rows.map((row) => {
    const status = byCriterion.get(row.criterionId);
    if (status === undefined) return row;
    return {
      ...row,
      status,
      statusLabel: STATUS_LABELS[status],
      color: STATUS_COLORS[status],
      effect: rowEffect(row.kind, status),
      overridden: true,
    };
  });
  return {
    ...view,
    rows,
    banner: {
      tallies: response.tallies,
      determination: response.determination,
      statusLabel: determinationLabel(response.determination),
      disqualifyingCount: response.disqualifying_count_after,
    },
  };
}

export interface QueueRow extends QueueItem {
  position: number;
  selected: boolean;
  patientLabel: string;
}

export interface QueueView {
  jobId: string;
  total: number;
  pending: number;
  items: QueueRow[];
}

/** Present the triage queue in server order (ascending near-miss count). */
export function queueView(
  queue: Queue,
  selected?: { trialId: string; patientId: string },
  options: RenderOptions = {},
): QueueView {
  const items = queue.items.map((item, index) => ({
    ...item,
    position: index + 1,
    selected:
      selected !== undefined &&
      item.trial_id === selected.trialId &&
      item.patient_id === selected.patientId,
    patientLabel: options.revealIdentifiers
      ? item.patient_id
      : redactId(item.patient_id),
  }));
  return {
    jobId: queue.job_id,
    total: items.length,
    pending: items.filter((i) => i.state === "Pending").length,
    items,
  };
}
