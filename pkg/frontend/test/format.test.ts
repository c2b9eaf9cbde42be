import { describe, expect, it } from "vitest";

import {
  appendGrowth,
  completions,
  expectedDiffidentSize,
  relationPerfRows,
  transcriptLine,
  verdictView,
} from "../src/format.js";
import { BuffersPayload } from "../src/wire.js";
import { DoneSummary } from "../src/session.js";

function outcome(partial: Partial<DoneSummary>): DoneSummary {
  return {
    verdict: "answer",
    answer: "rome",
    threshold: 1.25,
    topScore: 2.5,
    openWorld: false,
    top: [["rome", 2.5], ["paris", 1.1]],
    ...partial,
  };
}

describe("verdict view", () => {
  it("shows answer, applied threshold, and ranked candidates", () => {
    const view = verdictView(outcome({}));
    expect(view.headline).toBe("Answer: rome (top score 2.5000)");
    expect(view.threshold).toBe("threshold 1.2500");
    expect(view.candidates).toEqual([
      { rank: 1, entity: "rome", score: "2.5000" },
      { rank: 2, entity: "paris", score: "1.1000" },
    ]);
  });

  it("caps the candidate list at ten", () => {
    const top: [string, number][] = Array.from({ length: 14 }, (_, i) => [
      `e${i}`,
      14 - i,
    ]);
    const view = verdictView(outcome({ top }));
    expect(view.candidates).toHaveLength(10);
    expect(view.candidates[9]).toEqual({ rank: 10, entity: "e9", score: "5.0000" });
  });

  it("words rejections and unanswerables distinctly", () => {
    expect(verdictView(outcome({ verdict: "reject", answer: null })).headline).toContain(
      "Rejected",
    );
    expect(
      verdictView(outcome({ verdict: "unanswerable", answer: null, topScore: null }))
        .headline,
    ).toContain("Unanswerable");
  });
});

describe("transcript lines", () => {
  it("renders both query directions", () => {
    expect(
      transcriptLine({ event: "query", direction: "tail", entity: "rome", relation: "in" }),
    ).toBe("query (rome, in, ?)");
    expect(
      transcriptLine({
        event: "query",
        direction: "head",
        entity: "rome",
        relation: "in",
        entity_known: true,
        relation_known: false,
      }),
    ).toBe("query (?, in, rome) [entity known, relation new]");
  });

  it("renders accepted facts with their triples verbatim", () => {
    const line = transcriptLine({
      event: "facts",
      offered: 2,
      accepted: 1,
      duplicates: 1,
      triples: [
        ["a", "r", "b"],
        ["a", "r", "c"],
      ],
    });
    expect(line).toBe("facts: offered 2, accepted 1, duplicates 1: (a, r, b) (a, r, c)");
  });

  it("renders bare and scored verdicts", () => {
    expect(transcriptLine({ event: "verdict", verdict: "unanswerable" })).toBe(
      "verdict: unanswerable",
    );
    expect(
      transcriptLine({
        event: "verdict",
        verdict: "reject",
        answer: null,
        threshold: 2,
        top_score: 1.5,
        top: [],
      }),
    ).toBe("verdict: reject, answer -, threshold 2.0000, top score 1.5000");
  });
});

describe("autocomplete", () => {
  const names = ["rome", "romania", "paris", "prague", "san_marino"];

  it("prefers prefix matches and keeps substring matches after them", () => {
    expect(completions(names, "ro")).toEqual(["rome", "romania"]);
    expect(completions(names, "ma")).toEqual(["romania", "san_marino"]);
    expect(completions(names, "RO")).toEqual(["rome", "romania"]);
  });

  it("caps the list and handles the empty prompt", () => {
    expect(completions(names, "", 3)).toEqual(["rome", "romania", "paris"]);
    expect(completions(names, "zzz")).toEqual([]);
  });
});

describe("dashboard derivations", () => {
  it("matches the ceil(rho n / 100) diffident size", () => {
    expect(expectedDiffidentSize(20, 7)).toBe(2);
    expect(expectedDiffidentSize(20, 10)).toBe(2);
    expect(expectedDiffidentSize(33, 3)).toBe(1);
    expect(expectedDiffidentSize(20, 0)).toBe(0);
  });

  it("sorts relations worst first and flags the diffident ones", () => {
    const buffers = {
      v: 1,
      stale: false,
      thresholds: { entities: {}, relations: {} },
      performance: {
        entities: {},
        relations: {
          good: { mean: 0.9, count: 5 },
          bad: { mean: 0.1, count: 3 },
          mid: { mean: 0.5, count: 4 },
        },
      },
      diffident: { entities: [], relations: ["bad"], rho: 20 },
    } as BuffersPayload;
    expect(relationPerfRows(buffers)).toEqual([
      { name: "bad", mean: 0.1, count: 3, diffident: true },
      { name: "mid", mean: 0.5, count: 4, diffident: false },
      { name: "good", mean: 0.9, count: 5, diffident: false },
    ]);
  });

  it("records growth only when the triple count changes", () => {
    let history = appendGrowth([], 10, 1);
    history = appendGrowth(history, 10, 2);
    history = appendGrowth(history, 12, 3);
    expect(history).toEqual([
      { at: 1, triples: 10 },
      { at: 3, triples: 12 },
    ]);
  });
});
