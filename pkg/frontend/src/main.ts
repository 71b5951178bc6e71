// Browser entry point: wires the session to the DOM. All rendering goes
// through the string builders in render.ts; this file only mounts output
// and translates clicks into session calls.
import { ApiClient } from "./api.js";
import { ReviewSession } from "./overrides.js";
import {
  renderCaseState,
  renderEvidencePanel,
  renderModal,
  renderQueue,
  renderTimer,
} from "./render.js";
import { inspectEvidence } from "./viewmodel.js";

interface ConsoleConfig {
  baseUrl: string;
  token: string;
  jobId: string;
  reviewerId: string;
}

function readConfig(): ConsoleConfig {
  const params = new URLSearchParams(window.location.search);
  const stored = (key: string) => window.localStorage.getItem(key) ?? "";
  return {
    baseUrl: params.get("base") ?? stored("reviewBaseUrl") ?? "",
    token: params.get("token") ?? stored("reviewToken"),
    jobId: params.get("job") ?? stored("reviewJobId"),
    reviewerId: params.get("reviewer") ?? stored("reviewerId") ?? "reviewer",
  };
}

export function mountConsole(root: HTMLElement, config: ConsoleConfig): void {
  const api = new ApiClient({ baseUrl: config.baseUrl, token: config.token });
  const session = new ReviewSession(api, config.jobId, config.reviewerId);
  let evidenceCriterion: string | null = null;

  const redraw = () => {
    const queueHtml = session.queue ? renderQueue(session.queue) : "";
    const caseHtml = renderCaseState(session.caseState);
    const evidenceHtml =
      evidenceCriterion !== null && session.caseState.kind === "open"
        ? renderEvidencePanel(
            inspectEvidence(session.caseState.report, evidenceCriterion, {
              revealIdentifiers: session.revealIdentifiers,
            }),
          )
        : "";
    root.innerHTML = [
      `<div class="toolbar">`,
      `<button data-action="reload-queue">Reload queue</button>`,
      `<button data-action="toggle-reveal">` +
        `${session.revealIdentifiers ? "Hide" : "Reveal"} identifiers</button>`,
      `<button data-action="confirm">Confirm assessment</button>`,
      renderTimer(session.timer, session.elapsedSeconds()),
      `</div>`,
      `<main class="layout">`,
      queueHtml,
      `<div class="case-pane">${caseHtml}${renderModal(session.modal)}</div>`,
      `<div class="evidence-pane">${evidenceHtml}</div>`,
      `</main>`,
    ].join("");
  };

  root.addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const queueItem = target.closest<HTMLElement>(".queue-item");
    if (queueItem?.dataset.trial && queueItem.dataset.patient) {
      void session
        .openCase(queueItem.dataset.trial, queueItem.dataset.patient)
        .then(redraw);
      return;
    }
    const action = target.dataset.action;
    if (action === "reload-queue") {
      void session.loadQueue().then(redraw);
    } else if (action === "toggle-reveal") {
      session.toggleRevealIdentifiers();
      redraw();
    } else if (action === "evidence" && target.dataset.criterion) {
      evidenceCriterion = target.dataset.criterion;
      redraw();
    } else if (action === "override" && target.dataset.criterion) {
      session.beginOverride(target.dataset.criterion);
      redraw();
    } else if (action === "submit-overrides") {
      collectModalInputs(root, session);
      void session.submitOverrides().then(redraw);
    } else if (action === "cancel-overrides") {
      session.modal = { open: false, drafts: [], problems: [] };
      redraw();
    } else if (action === "confirm") {
      void session.confirmCase().then(redraw);
    } else if (action === "retry") {
      void session.retry().then(redraw);
    }
  });

  void session.loadQueue().then(redraw);
}

function collectModalInputs(root: HTMLElement, session: ReviewSession): void {
  for (const fieldset of root.querySelectorAll<HTMLElement>(
    ".override-modal fieldset",
  )) {
    const criterionId = fieldset.dataset.criterion;
    if (!criterionId) continue;
    const status = fieldset.querySelector<HTMLSelectElement>(".new-status");
    const note = fieldset.querySelector<HTMLTextAreaElement>(".note");
    if (status && (status.value === "met" || status.value === "not_met" ||
        status.value === "unable_to_determine")) {
      session.setOverrideStatus(criterionId, status.value);
    }
    if (note) session.setOverrideNote(criterionId, note.value);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountConsole(document.getElementById("app") as HTMLElement, readConfig());
}
