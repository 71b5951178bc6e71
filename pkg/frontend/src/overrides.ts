// Review session state: queue navigation, claim-on-open, the override
// dialog, and decision submission. Conflicts from the optimistic
// concurrency checks are surfaced to the reviewer, never retried
// silently.
import { ApiError, ReviewApi } from "./api.js";
import {
  CriterionStatus,
  DecisionResponse,
  ErrorMode,
  OverrideRequest,
  QueueItem,
  Report,
} from "./types.js";
import {
  applyDecision,
  CaseView,
  queueView,
  QueueView,
  redactId,
  renderCase,
} from "./viewmodel.js";

export interface TimerState {
  running: boolean;
  startedAtMs: number;
  elapsedS: number;
}

export interface OverrideDraft {
  criterionId: string;
  currentStatus: CriterionStatus;
  newStatus: CriterionStatus | null;
  note: string;
  errorMode: ErrorMode;
}

export interface ModalState {
  open: boolean;
  drafts: OverrideDraft[];
  problems: string[];
}

export type CaseState =
  | { kind: "idle" }
  | { kind: "error"; message: string; retryable: boolean }
  | { kind: "open"; item: QueueItem; report: Report; view: CaseView };

export type SubmitResult =
  | { ok: true; response: DecisionResponse }
  | { ok: false; problems: string[] };

function conflictMessage(error: ApiError): string {
  return error.errorType === "ConflictError" || error.status === 409
    ? `Claimed by another reviewer (${error.message})`
    : error.message;
}

export class ReviewSession {
  private readonly api: ReviewApi;
  private readonly jobId: string;
  private readonly reviewerId: string;
  private readonly clock: () => number;

  queue: QueueView | null = null;
  caseState: CaseState = { kind: "idle" };
  modal: ModalState = { open: false, drafts: [], problems: [] };
  timer: TimerState = { running: false, startedAtMs: 0, elapsedS: 0 };
  revealIdentifiers = false;

  private lastRequested: { trialId: string; patientId: string } | null = null;

  constructor(
    api: ReviewApi,
    jobId: string,
    reviewerId: string,
    clock: () => number = () => Date.now(),
  ) {
    this.api = api;
    this.jobId = jobId;
    this.reviewerId = reviewerId;
    this.clock = clock;
  }

  async loadQueue(): Promise<QueueView> {
    const queue = await this.api.triageQueue(this.jobId);
    this.queue = queueView(queue, this.selectedKey(), {
      revealIdentifiers: this.revealIdentifiers,
    });
    return this.queue;
  }

  private selectedKey(): { trialId: string; patientId: string } | undefined {
    if (this.caseState.kind !== "open") return undefined;
    return {
      trialId: this.caseState.item.trial_id,
      patientId: this.caseState.item.patient_id,
    };
  }

  toggleRevealIdentifiers(): void {
    this.revealIdentifiers = !this.revealIdentifiers;
    if (this.caseState.kind === "open") {
      this.caseState = {
        ...this.caseState,
        view: renderCase(this.caseState.report, {
          revealIdentifiers: this.revealIdentifiers,
        }),
      };
    }
    if (this.queue !== null) {
      this.queue = {
        ...this.queue,
        items: this.queue.items.map((item) => ({
          ...item,
          patientLabel: this.revealIdentifiers
            ? item.patient_id
            : redactId(item.patient_id),
        })),
      };
    }
  }

  /** Claim an item and load its report; the review timer starts here. */
  async openCase(trialId: string, patientId: string): Promise<CaseState> {
    this.lastRequested = { trialId, patientId };
    const queued = this.queue?.items.find(
      (i) => i.trial_id === trialId && i.patient_id === patientId,
    );
    if (queued === undefined) {
      this.caseState = {
        kind: "error",
        message: `No queue item for ${trialId}/${patientId}`,
        retryable: false,
      };
      return this.caseState;
    }
    try {
      const item = await this.api.claim(queued, this.reviewerId);
      const fetched = await this.api.getReport(this.jobId, trialId, patientId);
      this.caseState = {
        kind: "open",
        item,
        report: fetched.report,
        view: renderCase(fetched.report, {
          revealIdentifiers: this.revealIdentifiers,
        }),
      };
      this.timer = { running: true, startedAtMs: this.clock(), elapsedS: 0 };
      this.modal = { open: false, drafts: [], problems: [] };
    } catch (error) {
      if (error instanceof ApiError) {
        this.caseState = {
          kind: "error",
          message: conflictMessage(error),
          retryable: !error.isConflict,
        };
      } else {
        this.caseState = {
          kind: "error",
          message: `Could not load case: ${String(error)}`,
          retryable: true,
        };
      }
    }
    return this.caseState;
  }

  /** Re-attempt the last failed case load. */
  async retry(): Promise<CaseState> {
    if (this.lastRequested === null) return this.caseState;
    return this.openCase(this.lastRequested.trialId, this.lastRequested.patientId);
  }

  elapsedSeconds(): number {
    if (!this.timer.running) return this.timer.elapsedS;
    return (this.clock() - this.timer.startedAtMs) / 1000;
  }

  /** Open the feedback dialog for one criterion row. */
  beginOverride(criterionId: string): OverrideDraft | null {
    if (this.caseState.kind !== "open") return null;
    const row = this.caseState.view.rows.find((r) => r.criterionId === criterionId);
    if (row === undefined) return null;
    let draft = this.modal.drafts.find((d) => d.criterionId === criterionId);
    if (draft === undefined) {
      draft = {
        criterionId,
        currentStatus: row.status,
        newStatus: null,
        note: "",
        errorMode: "other",
      };
      this.modal.drafts.push(draft);
    }
    this.modal.open = true;
    this.modal.problems = [];
    return draft;
  }

  setOverrideStatus(criterionId: string, status: CriterionStatus): void {
    const draft = this.modal.drafts.find((d) => d.criterionId === criterionId);
    if (draft) draft.newStatus = status;
  }

  setOverrideNote(criterionId: string, note: string): void {
    const draft = this.modal.drafts.find((d) => d.criterionId === criterionId);
    if (draft) draft.note = note;
  }

  setOverrideErrorMode(criterionId: string, mode: ErrorMode): void {
    const draft = this.modal.drafts.find((d) => d.criterionId === criterionId);
    if (draft) draft.errorMode = mode;
  }

  discardOverride(criterionId: string): void {
    this.modal.drafts = this.modal.drafts.filter(
      (d) => d.criterionId !== criterionId,
    );
    if (this.modal.drafts.length === 0) this.modal.open = false;
  }

  /** Feedback is the KB's input, so notes are mandatory on overrides. */
  validateOverrides(): string[] {
    const problems: string[] = [];
    if (this.modal.drafts.length === 0) {
      problems.push("An override decision needs at least one changed criterion.");
    }
    for (const draft of this.modal.drafts) {
      if (draft.newStatus === null) {
        problems.push(`${draft.criterionId}: choose a new status.`);
      } else if (draft.newStatus === draft.currentStatus) {
        problems.push(`${draft.criterionId}: new status equals the current one.`);
      }
      if (draft.note.trim() === "") {
        problems.push(`${draft.criterionId}: a feedback note is required.`);
      }
    }
    return problems;
  }

  /** Submit all drafted overrides as one decision. */
  async submitOverrides(): Promise<SubmitResult> {
    const problems = this.validateOverrides();
    if (problems.length > 0) {
      this.modal.problems = problems;
      return { ok: false, problems };
    }
    const overrides: OverrideRequest[] = this.modal.drafts.map((d) => ({
      criterion_id: d.criterionId,
      new_status: d.newStatus as CriterionStatus,
      note: d.note.trim(),
      error_mode: d.errorMode,
    }));
    return this.decide("override", overrides);
  }

  /** Agree with the assessment; no overrides, no KB write. */
  async confirmCase(): Promise<SubmitResult> {
    return this.decide("confirm", []);
  }

  private async decide(
    action: "confirm" | "override",
    overrides: OverrideRequest[],
  ): Promise<SubmitResult> {
    if (this.caseState.kind !== "open") {
      return { ok: false, problems: ["No case is open."] };
    }
    const open = this.caseState;
    try {
      const response = await this.api.decide(
        open.item,
        this.reviewerId,
        action,
        overrides,
      );
      this.timer = {
        running: false,
        startedAtMs: this.timer.startedAtMs,
        elapsedS: (this.clock() - this.timer.startedAtMs) / 1000,
      };
      this.caseState = {
        ...open,
        item: { ...open.item, state: response.state, version: response.version },
        view: applyDecision(open.view, response, overrides),
      };
      this.modal = { open: false, drafts: [], problems: [] };
      if (this.queue !== null) {
        this.queue = {
          ...this.queue,
          items: this.queue.items.map((i) =>
            i.trial_id === open.item.trial_id && i.patient_id === open.item.patient_id
              ? { ...i, state: response.state, version: response.version,
                  determination: response.determination }
              : i,
          ),
          pending: this.queue.items.filter(
            (i) =>
              i.state === "Pending" &&
              !(i.trial_id === open.item.trial_id &&
                i.patient_id === open.item.patient_id),
          ).length,
        };
      }
      return { ok: true, response };
    } catch (error) {
      if (error instanceof ApiError) {
        const problems = [conflictMessage(error)];
        this.modal.problems = problems;
        return { ok: false, problems };
      }
      throw error;
    }
  }
}
