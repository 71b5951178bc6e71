// HTML rendering for the console. Pure string builders so the screens can
// be tested without a browser; main.ts mounts the output and wires events.
import { CaseState, ModalState, TimerState } from "./overrides.js";
import {
  CaseView,
  CriterionRow,
  DISCLAIMER,
  EvidencePanel,
  QueueView,
} from "./viewmodel.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderDisclaimer(): string {
  return `<div class="disclaimer" role="note">${escapeHtml(DISCLAIMER)}</div>`;
}

export function renderBanner(view: CaseView): string {
  const { tallies, statusLabel } = view.banner;
  const cls = statusLabel === "Eligible" ? "eligible" : "ineligible";
  return [
    `<header class="banner ${cls}">`,
    `<span class="patient">${escapeHtml(view.patientLabel)}</span>`,
    `<span class="trial">${escapeHtml(view.trialId)}</span>`,
    `<span class="status">${escapeHtml(statusLabel)}</span>`,
    `<span class="tally qualifying">Qualifying: ${tallies.qualifying}</span>`,
    `<span class="tally disqualifying">Disqualifying: ${tallies.disqualifying}</span>`,
    `<span class="tally unable">Unable to determine: ${tallies.unable}</span>`,
    `<details class="technical"><summary>Show Technical Details</summary>`,
    `<dl><dt>Config digest</dt><dd>${escapeHtml(view.technical.configDigest)}</dd>`,
    `<dt>KB version</dt><dd>${view.technical.kbVersion}</dd></dl></details>`,
    `</header>`,
  ].join("");
}

function renderRow(row: CriterionRow): string {
  const explanations = row.explanations
    .map(
      (e) =>
        `<li class="opinion"><span class="specialty">${escapeHtml(e.specialty)}</span>` +
        ` <span class="opinion-status">${escapeHtml(e.statusLabel)}</span>` +
        ` <span class="explanation">${escapeHtml(e.explanation)}</span></li>`,
    )
    .join("");
  const evidence = row.evidenceCount > 0
    ? `<button data-action="evidence" data-criterion="${escapeHtml(row.criterionId)}">` +
      `Evidence (${row.evidenceCount})</button>`
    : `<span class="no-evidence">no evidence</span>`;
  const overridden = row.overridden ? ` overridden` : "";
  return [
    `<tr class="criterion ${row.color}${overridden}" data-criterion="${escapeHtml(row.criterionId)}"`,
    ` data-status="${row.status}" data-effect="${row.effect}">`,
    `<td class="id">${escapeHtml(row.criterionId)}</td>`,
    `<td class="kind">${row.kind}</td>`,
    `<td class="row-status">${escapeHtml(row.statusLabel)}</td>`,
    `<td class="explanations"><ul>${explanations}</ul></td>`,
    `<td class="evidence">${evidence}</td>`,
    `<td class="actions"><button data-action="override" data-criterion="${escapeHtml(row.criterionId)}">Override</button></td>`,
    `</tr>`,
  ].join("");
}

export function renderCaseHtml(view: CaseView): string {
  if (view.empty) {
    return `<section class="case">${renderDisclaimer()}` +
      `<p class="empty-state">${escapeHtml(view.emptyMessage)}</p></section>`;
  }
  const rows = view.rows.map(renderRow).join("");
  return [
    `<section class="case">`,
    renderBanner(view),
    renderDisclaimer(),
    `<table class="criteria"><thead><tr>`,
    `<th>Criterion</th><th>Kind</th><th>Status</th>`,
    `<th>Expert explanations</th><th>Evidence</th><th></th>`,
    `</tr></thead><tbody>${rows}</tbody></table>`,
    `</section>`,
  ].join("");
}

export function renderEvidencePanel(panel: EvidencePanel): string {
  if (panel.state === "empty") {
    return `<aside class="evidence-panel empty">` +
      `<p>${escapeHtml(panel.message)}</p></aside>`;
  }
  const docs = panel.documents
    .map((doc, index) => {
      const snippets = doc.snippets
        .map(
          (s) =>
            `<blockquote class="snippet" data-chunk="${s.chunkIndex}">` +
            `${escapeHtml(s.text)}</blockquote>`,
        )
        .join("");
      return (
        `<section class="evidence-doc" data-doc="${index}">` +
        `<h4>${escapeHtml(doc.docLabel)}</h4>${snippets}</section>`
      );
    })
    .join("");
  const selector = panel.documents
    .map(
      (doc, index) =>
        `<option value="${index}">${escapeHtml(doc.docLabel)}</option>`,
    )
    .join("");
  return [
    `<aside class="evidence-panel" data-criterion="${escapeHtml(panel.criterionId)}">`,
    `<select class="doc-selector">${selector}</select>`,
    docs,
    `</aside>`,
  ].join("");
}

export function renderQueue(queue: QueueView): string {
  const rows = queue.items
    .map((item) => {
      const selected = item.selected ? " selected" : "";
      return (
        `<li class="queue-item${selected}" data-trial="${escapeHtml(item.trial_id)}"` +
        ` data-patient="${escapeHtml(item.patient_id)}">` +
        `<span class="pos">${item.position}/${queue.total}</span>` +
        ` <span class="patient">${escapeHtml(item.patientLabel)}</span>` +
        ` <span class="trial">${escapeHtml(item.trial_id)}</span>` +
        ` <span class="count">${item.disqualifying_count}</span>` +
        ` <span class="state">${item.state}</span></li>`
      );
    })
    .join("");
  return `<nav class="queue" data-pending="${queue.pending}"><ol>${rows}</ol></nav>`;
}

export function renderModal(modal: ModalState): string {
  if (!modal.open) return "";
  const problems = modal.problems.length
    ? `<ul class="problems">${modal.problems
        .map((p) => `<li>${escapeHtml(p)}</li>`)
        .join("")}</ul>`
    : "";
  const drafts = modal.drafts
    .map(
      (d) =>
        `<fieldset data-criterion="${escapeHtml(d.criterionId)}">` +
        `<legend>${escapeHtml(d.criterionId)}</legend>` +
        `<select class="new-status" required>` +
        `<option value="met"${d.newStatus === "met" ? " selected" : ""}>Met</option>` +
        `<option value="not_met"${d.newStatus === "not_met" ? " selected" : ""}>Not Met</option>` +
        `<option value="unable_to_determine"${d.newStatus === "unable_to_determine" ? " selected" : ""}>Unable To Determine</option>` +
        `</select>` +
        `<textarea class="note" placeholder="Why is the assessment wrong? (required)">` +
        `${escapeHtml(d.note)}</textarea>` +
        `</fieldset>`,
    )
    .join("");
  return [
    `<dialog class="override-modal" open>`,
    problems,
    drafts,
    `<button data-action="submit-overrides">Submit override</button>`,
    `<button data-action="cancel-overrides">Cancel</button>`,
    `</dialog>`,
  ].join("");
}

export function renderErrorState(message: string, retryable: boolean): string {
  const retry = retryable
    ? `<button data-action="retry">Retry</button>`
    : "";
  return `<div class="error-state"><p>${escapeHtml(message)}</p>${retry}</div>`;
}

export function renderTimer(timer: TimerState, elapsedS: number): string {
  const state = timer.running ? "running" : "stopped";
  return `<span class="timer ${state}">${Math.floor(elapsedS)}s</span>`;
}

export function renderCaseState(state: CaseState): string {
  if (state.kind === "idle") {
    return `<p class="empty-state">Select a case from the queue.</p>`;
  }
  if (state.kind === "error") {
    return renderErrorState(state.message, state.retryable);
  }
  return renderCaseHtml(state.view);
}
