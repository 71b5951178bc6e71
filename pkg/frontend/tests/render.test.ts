import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderBanner,
  renderCaseHtml,
  renderCaseState,
  renderErrorState,
  renderEvidencePanel,
  renderModal,
  renderQueue,
} from "../src/render.js";
import { inspectEvidence, queueView, renderCase } from "../src/viewmodel.js";
import { assessment, sampleQueue, sampleReport } from "./fixtures.js";

describe("escapeHtml", () => {
  it("escapes markup-significant characters", () => {
    expect(escapeHtml(`<b>"x" & 'y'</b>`)).toBe(
      "&lt;b&gt;&quot;x&quot; &amp; &#39;y&#39;&lt;/b&gt;",
    );
  });
});

describe("renderBanner", () => {
  it("prints the three tallies and the status", () => {
    const html = renderBanner(renderCase(sampleReport()));
    expect(html).toContain("Qualifying: 2");
    expect(html).toContain("Disqualifying: 1");
    expect(html).toContain("Unable to determine: 1");
    expect(html).toContain(`<span class="status">Ineligible</span>`);
  });

  it("shows Disqualifying: 2 and Ineligible for a two-strike case", () => {
    const report = sampleReport({
      disqualifying_count: 2,
      tallies: { qualifying: 1, disqualifying: 2, unable: 1 },
      assessments: [
        assessment("90-001-i1", "inclusion", "met"),
        assessment("90-001-i2", "inclusion", "not_met"),
        assessment("90-001-e1", "exclusion", "met"),
        assessment("90-001-e2", "exclusion", "unable_to_determine"),
      ],
    });
    const html = renderBanner(renderCase(report));
    expect(html).toContain("Disqualifying: 2");
    expect(html).toContain("Ineligible");
  });

  it("tucks config digest and KB version behind a details control", () => {
    const html = renderBanner(renderCase(sampleReport({ kb_version: 4 })));
    expect(html).toContain("Show Technical Details");
    expect(html).toContain("c0ffee00c0ffee00");
    expect(html).toContain("<dt>KB version</dt><dd>4</dd>");
  });
});

describe("renderCaseHtml", () => {
  it("renders a row per criterion with status attributes", () => {
    const html = renderCaseHtml(renderCase(sampleReport()));
    expect(html.match(/<tr class="criterion /g)).toHaveLength(4);
    expect(html).toContain(`data-criterion="90-001-i2" data-status="not_met"`);
    expect(html).toContain(`data-effect="disqualifying"`);
  });

  it("always includes the disclaimer banner", () => {
    const html = renderCaseHtml(renderCase(sampleReport()));
    expect(html).toContain(
      "This assessment is made by AI and may contain inaccuracies",
    );
  });

  it("renders the empty state for an empty report", () => {
    const report = sampleReport({
      assessments: [],
      tallies: { qualifying: 0, disqualifying: 0, unable: 0 },
      disqualifying_count: 0,
      determination: "PotentiallyEligible",
    });
    const html = renderCaseHtml(renderCase(report));
    expect(html).toContain("empty-state");
    expect(html).not.toContain("<table");
  });

  it("escapes explanation text", () => {
    const report = sampleReport();
    const first = report.assessments[0]!;
    first.opinions[0]!.explanation = `<script>alert("x")</script>`;
    const html = renderCaseHtml(renderCase(report));
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });
});

describe("renderEvidencePanel", () => {
  it("renders a selector entry per document and verbatim snippets", () => {
    const report = sampleReport();
    const html = renderEvidencePanel(inspectEvidence(report, "90-001-i1"));
    expect(html.match(/<option /g)).toHaveLength(3);
    expect(html).toContain("Pathology Report (2021-03-01)");
    expect(html).toContain("specimen shows invasive carcinoma, grade 2");
  });

  it("renders the explanatory empty state", () => {
    const html = renderEvidencePanel(
      inspectEvidence(sampleReport(), "90-001-e2"),
    );
    expect(html).toContain("evidence-panel empty");
    expect(html).toContain("No AI evidence");
  });
});

describe("renderQueue", () => {
  it("lists items with position, count, and state", () => {
    const html = renderQueue(queueView(sampleQueue()));
    expect(html.match(/queue-item/g)).toHaveLength(3);
    expect(html).toContain("1/3");
    expect(html).toContain(`data-pending="3"`);
  });

  it("marks the selected item", () => {
    const html = renderQueue(
      queueView(sampleQueue(), { trialId: "90-001", patientId: "P0005" }),
    );
    expect(html).toContain("queue-item selected");
  });
});

describe("renderModal", () => {
  it("is absent while closed", () => {
    expect(renderModal({ open: false, drafts: [], problems: [] })).toBe("");
  });

  it("shows drafts and validation problems", () => {
    const html = renderModal({
      open: true,
      drafts: [
        {
          criterionId: "90-001-i2",
          currentStatus: "not_met",
          newStatus: "met",
          note: "",
          errorMode: "other",
        },
      ],
      problems: ["90-001-i2: a feedback note is required."],
    });
    expect(html).toContain("override-modal");
    expect(html).toContain("90-001-i2");
    expect(html).toContain("a feedback note is required");
    expect(html).toContain(`<option value="met" selected>`);
  });
});

describe("renderCaseState", () => {
  it("prompts for a selection while idle", () => {
    expect(renderCaseState({ kind: "idle" })).toContain("Select a case");
  });

  it("offers retry only for retryable errors", () => {
    expect(renderErrorState("boom", true)).toContain(`data-action="retry"`);
    expect(renderErrorState("boom", false)).not.toContain("retry");
    expect(
      renderCaseState({ kind: "error", message: "boom", retryable: true }),
    ).toContain("Retry");
  });
});
