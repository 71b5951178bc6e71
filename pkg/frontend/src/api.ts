// Thin typed client over the prescreening service. All eligibility logic
// stays on the server; this module only fetches, validates, and reports
// errors in a shape the console can surface.
import {
  DecisionAction,
  DecisionResponse,
  DecisionResponseSchema,
  EvidencePayload,
  EvidencePayloadSchema,
  Kb,
  KbSchema,
  OverrideRequest,
  Queue,
  QueueItem,
  QueueItemSchema,
  QueueSchema,
  Report,
  ReportSchema,
  RunJob,
  RunJobSchema,
  TrialDetail,
  TrialDetailSchema,
  TrialSummary,
  TrialSummarySchema,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly errorType: string;

  constructor(status: number, detail: string, errorType = "") {
    super(detail);
    this.name = "ApiError";
    this.status = status;
    this.errorType = errorType;
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

/** Audit metadata the server attaches to every response. */
export interface ResponseMeta {
  configDigest: string;
  kbVersion: number;
}

export interface FetchedReport {
  report: Report;
  /** Exact bytes the server stored, for display fidelity and digests. */
  rawText: string;
}

export interface ApiClientOptions {
  baseUrl: string;
  token: string;
  fetchImpl?: typeof fetch;
}

/** The slice of the client the review session depends on. */
export interface ReviewApi {
  triageQueue(jobId: string): Promise<Queue>;
  claim(
    item: Pick<QueueItem, "job_id" | "trial_id" | "patient_id" | "version">,
    reviewerId: string,
  ): Promise<QueueItem>;
  getReport(
    jobId: string,
    trialId: string,
    patientId: string,
  ): Promise<FetchedReport>;
  decide(
    item: Pick<QueueItem, "job_id" | "trial_id" | "patient_id" | "version">,
    reviewerId: string,
    action: DecisionAction,
    overrides: OverrideRequest[],
  ): Promise<DecisionResponse>;
}

function newIdempotencyKey(): string {
  return globalThis.crypto.randomUUID();
}

export class ApiClient implements ReviewApi {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchImpl: typeof fetch;
  private meta: ResponseMeta | null = null;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  /** Config digest and KB version seen on the most recent response. */
  lastMeta(): ResponseMeta | null {
    return this.meta;
  }

  private async request(
    path: string,
    init: RequestInit = {},
    idempotencyKey?: string,
  ): Promise<Response> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
      ...(init.body ? { "Content-Type": "application/json" } : {}),
      ...(idempotencyKey ? { "Idempotency-Key": idempotencyKey } : {}),
    };
    const response = await this.fetchImpl(`${this.baseUrl}/api/v1${path}`, {
      ...init,
      headers,
    });
    const digest = response.headers.get("X-Config-Digest");
    const kbVersion = response.headers.get("X-KB-Version");
    if (digest !== null && kbVersion !== null) {
      this.meta = { configDigest: digest, kbVersion: Number(kbVersion) };
    }
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      let errorType = "";
      try {
        const body = await response.json();
        if (typeof body.detail === "string") detail = body.detail;
        if (typeof body.error === "string") errorType = body.error;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, detail, errorType);
    }
    return response;
  }

  private async getJson(path: string): Promise<unknown> {
    const response = await this.request(path);
    return response.json();
  }

  private async postJson(
    path: string,
    body: unknown,
    idempotencyKey?: string,
  ): Promise<unknown> {
    const response = await this.request(
      path,
      { method: "POST", body: JSON.stringify(body) },
      idempotencyKey,
    );
    return response.json();
  }

  async listTrials(): Promise<TrialSummary[]> {
    return TrialSummarySchema.array().parse(await this.getJson("/trials"));
  }

  async getTrial(trialId: string): Promise<TrialDetail> {
    return TrialDetailSchema.parse(
      await this.getJson(`/trials/${encodeURIComponent(trialId)}`),
    );
  }

  async listPatients(): Promise<string[]> {
    const body = await this.getJson("/patients");
    return (body as { patient_ids: string[] }).patient_ids;
  }

  async submitRun(
    pairs: Array<{ patient_id: string; trial_id: string }>,
    runId?: string,
  ): Promise<RunJob> {
    const body = await this.postJson(
      "/runs",
      { pairs, run_id: runId ?? null },
      newIdempotencyKey(),
    );
    return RunJobSchema.parse(body);
  }

  async getRun(jobId: string): Promise<RunJob> {
    return RunJobSchema.parse(
      await this.getJson(`/runs/${encodeURIComponent(jobId)}`),
    );
  }

  async getReport(
    jobId: string,
    trialId: string,
    patientId: string,
  ): Promise<FetchedReport> {
    const response = await this.request(
      `/runs/${encodeURIComponent(jobId)}/reports/` +
        `${encodeURIComponent(trialId)}/${encodeURIComponent(patientId)}`,
    );
    const rawText = await response.text();
    return { report: ReportSchema.parse(JSON.parse(rawText)), rawText };
  }

  async getEvidence(
    jobId: string,
    trialId: string,
    patientId: string,
    criterionId: string,
  ): Promise<EvidencePayload> {
    return EvidencePayloadSchema.parse(
      await this.getJson(
        `/runs/${encodeURIComponent(jobId)}/reports/` +
          `${encodeURIComponent(trialId)}/${encodeURIComponent(patientId)}` +
          `/evidence/${encodeURIComponent(criterionId)}`,
      ),
    );
  }

  async triageQueue(jobId: string): Promise<Queue> {
    return QueueSchema.parse(
      await this.getJson(`/triage/queue?job_id=${encodeURIComponent(jobId)}`),
    );
  }

  async claim(
    item: Pick<QueueItem, "job_id" | "trial_id" | "patient_id" | "version">,
    reviewerId: string,
  ): Promise<QueueItem> {
    const body = await this.postJson(
      "/triage/claim",
      {
        job_id: item.job_id,
        trial_id: item.trial_id,
        patient_id: item.patient_id,
        version: item.version,
        reviewer_id: reviewerId,
      },
      newIdempotencyKey(),
    );
    return QueueItemSchema.parse(body);
  }

  async decide(
    item: Pick<QueueItem, "job_id" | "trial_id" | "patient_id" | "version">,
    reviewerId: string,
    action: DecisionAction,
    overrides: OverrideRequest[],
  ): Promise<DecisionResponse> {
    const body = await this.postJson(
      "/triage/decision",
      {
        job_id: item.job_id,
        trial_id: item.trial_id,
        patient_id: item.patient_id,
        version: item.version,
        reviewer_id: reviewerId,
        action,
        overrides,
      },
      newIdempotencyKey(),
    );
    return DecisionResponseSchema.parse(body);
  }

  async kb(): Promise<Kb> {
    return KbSchema.parse(await this.getJson("/kb"));
  }
}
