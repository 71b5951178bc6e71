import { describe, expect, it } from "vitest";

import {
  applyDecision,
  bannerMatchesRows,
  determinationLabel,
  DISCLAIMER,
  inspectEvidence,
  queueView,
  redactId,
  renderCase,
  rowEffect,
  rowStatusSums,
  STATUS_COLORS,
} from "../src/viewmodel.js";
import { DecisionResponse } from "../src/types.js";
import { assessment, queueItem, sampleQueue, sampleReport } from "./fixtures.js";

describe("renderCase", () => {
  it("renders one row per criterion in report order", () => {
    const view = renderCase(sampleReport());
    expect(view.rows.map((r) => r.criterionId)).toEqual([
      "90-001-i1",
      "90-001-i2",
      "90-001-e1",
      "90-001-e2",
    ]);
  });

  it("takes banner tallies from the server verbatim", () => {
    const view = renderCase(sampleReport());
    expect(view.banner.tallies).toEqual({ qualifying: 2, disqualifying: 1, unable: 1 });
    expect(view.banner.disqualifyingCount).toBe(1);
  });

  it("banner tallies equal the row-status sums", () => {
    const view = renderCase(sampleReport());
    expect(rowStatusSums(view.rows)).toEqual(view.banner.tallies);
    expect(bannerMatchesRows(view)).toBe(true);
  });

  it("labels a two-disqualifying report Ineligible", () => {
    const report = sampleReport({
      determination: "NotEligible",
      disqualifying_count: 2,
      tallies: { qualifying: 1, disqualifying: 2, unable: 1 },
      assessments: [
        assessment("90-001-i1", "inclusion", "met"),
        assessment("90-001-i2", "inclusion", "not_met"),
        assessment("90-001-e1", "exclusion", "met"),
        assessment("90-001-e2", "exclusion", "unable_to_determine"),
      ],
    });
    const view = renderCase(report);
    expect(view.banner.statusLabel).toBe("Ineligible");
    expect(view.banner.tallies.disqualifying).toBe(2);
    expect(bannerMatchesRows(view)).toBe(true);
  });

  it("labels a PotentiallyEligible report Eligible", () => {
    expect(determinationLabel("PotentiallyEligible")).toBe("Eligible");
    const report = sampleReport({
      determination: "PotentiallyEligible",
      disqualifying_count: 0,
      tallies: { qualifying: 3, disqualifying: 0, unable: 1 },
      assessments: [
        assessment("90-001-i1", "inclusion", "met"),
        assessment("90-001-i2", "inclusion", "met"),
        assessment("90-001-e1", "exclusion", "not_met"),
        assessment("90-001-e2", "exclusion", "unable_to_determine"),
      ],
    });
    expect(renderCase(report).banner.statusLabel).toBe("Eligible");
  });

  it("maps each status to exactly one color", () => {
    expect(STATUS_COLORS).toEqual({
      met: "green",
      not_met: "red",
      unable_to_determine: "amber",
    });
    const view = renderCase(sampleReport());
    for (const row of view.rows) {
      expect(row.color).toBe(STATUS_COLORS[row.status]);
    }
  });

  it("classifies row effects by kind and status", () => {
    expect(rowEffect("inclusion", "met")).toBe("qualifying");
    expect(rowEffect("inclusion", "not_met")).toBe("disqualifying");
    expect(rowEffect("exclusion", "met")).toBe("disqualifying");
    expect(rowEffect("exclusion", "not_met")).toBe("qualifying");
    expect(rowEffect("inclusion", "unable_to_determine")).toBe("unable");
    expect(rowEffect("exclusion", "unable_to_determine")).toBe("unable");
  });

  it("shows an empty state for a report with no criteria", () => {
    const view = renderCase(
      sampleReport({
        assessments: [],
        tallies: { qualifying: 0, disqualifying: 0, unable: 0 },
        disqualifying_count: 0,
        determination: "PotentiallyEligible",
      }),
    );
    expect(view.empty).toBe(true);
    expect(view.emptyMessage).not.toBe("");
    expect(bannerMatchesRows(view)).toBe(true);
  });

  it("redacts the patient id unless identifiers are revealed", () => {
    expect(renderCase(sampleReport()).patientLabel).toBe("P***2");
    expect(
      renderCase(sampleReport(), { revealIdentifiers: true }).patientLabel,
    ).toBe("P0002");
  });

  it("always carries the AI disclaimer", () => {
    const view = renderCase(sampleReport());
    expect(view.disclaimer).toBe(DISCLAIMER);
    expect(DISCLAIMER).toContain("made by AI");
  });

  it("exposes config digest and KB version as technical details", () => {
    const view = renderCase(sampleReport({ kb_version: 3 }));
    expect(view.technical).toEqual({
      configDigest: "c0ffee00c0ffee00",
      kbVersion: 3,
    });
  });
});

describe("redactId", () => {
  it("keeps first and last characters", () => {
    expect(redactId("P0007")).toBe("P***7");
    expect(redactId("D0123")).toBe("D***3");
  });

  it("fully masks short identifiers", () => {
    expect(redactId("ab")).toBe("***");
    expect(redactId("x")).toBe("***");
  });
});

describe("applyDecision", () => {
  const decision: DecisionResponse = {
    ...queueItem({ state: "Overridden", version: 1, reviewer_id: "rev-1" }),
    determination: "PotentiallyEligible",
    disqualifying_count_after: 0,
    tallies: { qualifying: 3, disqualifying: 0, unable: 1 },
  };

  it("flips the displayed status from the server response", () => {
    const before = renderCase(sampleReport());
    expect(before.banner.statusLabel).toBe("Ineligible");
    const after = applyDecision(before, decision, [
      { criterion_id: "90-001-i2", new_status: "met",
        note: "measurable disease on the scan", error_mode: "missing_information" },
    ]);
    expect(after.banner.statusLabel).toBe("Eligible");
    expect(after.banner.disqualifyingCount).toBe(0);
    expect(after.banner.tallies).toEqual(decision.tallies);
  });

  it("restates overridden rows and keeps the banner consistent", () => {
    const before = renderCase(sampleReport());
    const after = applyDecision(before, decision, [
      { criterion_id: "90-001-i2", new_status: "met",
        note: "measurable disease on the scan", error_mode: "missing_information" },
    ]);
    const row = after.rows.find((r) => r.criterionId === "90-001-i2");
    expect(row?.status).toBe("met");
    expect(row?.overridden).toBe(true);
    expect(row?.effect).toBe("qualifying");
    expect(bannerMatchesRows(after)).toBe(true);
  });

  it("leaves untouched rows alone on confirm", () => {
    const before = renderCase(sampleReport());
    const confirmResponse: DecisionResponse = {
      ...decision,
      state: "Confirmed",
      determination: "NotEligible",
      disqualifying_count_after: 1,
      tallies: { qualifying: 2, disqualifying: 1, unable: 1 },
    };
    const after = applyDecision(before, confirmResponse, []);
    expect(after.rows).toEqual(before.rows);
    expect(after.banner.statusLabel).toBe("Ineligible");
  });
});

describe("inspectEvidence", () => {
  it("offers one selectable document per distinct source", () => {
    const panel = inspectEvidence(sampleReport(), "90-001-i1");
    expect(panel.state).toBe("snippets");
    expect(panel.documents).toHaveLength(3);
    expect(panel.documents.map((d) => d.noteType)).toEqual([
      "Pathology Report",
      "Progress Note",
      "Radiology Report",
    ]);
  });

  it("labels documents with note type and date", () => {
    const panel = inspectEvidence(sampleReport(), "90-001-i1");
    expect(panel.documents[0]?.docLabel).toBe("Pathology Report (2021-03-01)");
  });

  it("passes snippet text through verbatim", () => {
    const report = sampleReport();
    const panel = inspectEvidence(report, "90-001-i2");
    const served = report.assessments[1]?.opinions[0]?.evidence[0]?.text;
    expect(panel.documents[0]?.snippets[0]?.text).toBe(served);
  });

  it("collects four documents across experts", () => {
    const report = sampleReport({
      assessments: [
        assessment("90-001-i1", "inclusion", "met", {
          opinions: [
            opinionWithDocs(["D0001", "D0002"]),
            opinionWithDocs(["D0002", "D0003", "D0004"]),
          ],
        }),
      ],
      tallies: { qualifying: 1, disqualifying: 0, unable: 0 },
      disqualifying_count: 0,
      determination: "PotentiallyEligible",
    });
    const panel = inspectEvidence(report, "90-001-i1");
    expect(panel.documents).toHaveLength(4);
  });

  it("explains the empty state for short-circuited criteria", () => {
    const panel = inspectEvidence(sampleReport(), "90-001-e2");
    expect(panel.state).toBe("empty");
    expect(panel.message).toContain("No AI evidence");
    expect(panel.documents).toEqual([]);
  });

  it("explains the empty state for an unknown criterion", () => {
    const panel = inspectEvidence(sampleReport(), "90-001-zz");
    expect(panel.state).toBe("empty");
    expect(panel.message).toContain("90-001-zz");
  });

  it("redacts document ids unless revealed", () => {
    expect(
      inspectEvidence(sampleReport(), "90-001-i1").documents[0]?.docId,
    ).toBe("D***1");
    expect(
      inspectEvidence(sampleReport(), "90-001-i1", { revealIdentifiers: true })
        .documents[0]?.docId,
    ).toBe("D0001");
  });
});

function opinionWithDocs(docIds: string[]) {
  return {
    specialty: "Pathology",
    status: "met" as const,
    explanation: "supported",
    evidence: docIds.map((docId, i) => ({
      doc_id: docId,
      note_type: "Progress Note",
      created_date: "2021-05-01",
      chunk_index: i,
      token_start: 0,
      token_end: 50,
      similarity: 0.3,
      text: `snippet from ${docId}`,
    })),
  };
}

describe("queueView", () => {
  it("preserves server order and numbers positions", () => {
    const view = queueView(sampleQueue());
    expect(view.items.map((i) => i.position)).toEqual([1, 2, 3]);
    expect(view.items.map((i) => i.disqualifying_count)).toEqual([1, 1, 2]);
    expect(view.total).toBe(3);
  });

  it("marks the selected case", () => {
    const view = queueView(sampleQueue(), {
      trialId: "90-002",
      patientId: "P0011",
    });
    expect(view.items.map((i) => i.selected)).toEqual([false, false, true]);
  });

  it("counts pending items", () => {
    const queue = sampleQueue();
    queue.items[0] = { ...queue.items[0]!, state: "Confirmed" };
    expect(queueView(queue).pending).toBe(2);
  });

  it("redacts patient labels by default", () => {
    const view = queueView(sampleQueue());
    expect(view.items[0]?.patientLabel).toBe("P***2");
  });
});
