/** Pure rendering and dashboard derivation helpers. */

import { BuffersPayload, KbStats, TranscriptEvent } from "./wire.js";
import { DoneSummary } from "./session.js";

export function fmtScore(x: number | null | undefined): string {
  if (x === null || x === undefined) return "-";
  return x.toFixed(4);
}

function tripleText(t: [string, string, string]): string {
  return `(${t[0]}, ${t[1]}, ${t[2]})`;
}

/** One line per transcript event, every field surfaced verbatim. */
export function transcriptLine(ev: TranscriptEvent): string {
  switch (ev.event) {
    case "query": {
      const shape =
        ev.direction === "tail"
          ? `(${ev.entity}, ${ev.relation}, ?)`
          : `(?, ${ev.relation}, ${ev.entity})`;
      const known =
        ev.entity_known === undefined
          ? ""
          : ` [entity ${ev.entity_known ? "known" : "new"}, relation ${
              ev.relation_known ? "known" : "new"
            }]`;
      return `query ${shape}${known}`;
    }
    case "need_clue":
    case "clue_request":
      return `engine asks for up to ${ev.max_n} clue(s) about relation "${ev.relation}"`;
    case "need_entity_fact":
    case "fact_request":
      return `engine asks for up to ${ev.max_n} fact(s) about entity "${ev.entity}"`;
    case "facts_posted":
      return `human posted ${ev.n} triple(s)`;
    case "clues":
    case "facts":
      return (
        `${ev.event}: offered ${ev.offered}, accepted ${ev.accepted}, ` +
        `duplicates ${ev.duplicates}: ${ev.triples.map(tripleText).join(" ")}`
      );
    case "training":
      return (
        `trained ${ev.epochs} epoch(s) on ${ev.n_triples} triple(s), ` +
        `mean hinge ${fmtScore(ev.mean_hinge)}`
      );
    case "validation":
      return `validated on ${ev.n_tuples} tuple(s), mean rr ${fmtScore(ev.mean_rr)}`;
    case "verdict": {
      if (ev.answer === undefined) return `verdict: ${ev.verdict}`;
      return (
        `verdict: ${ev.verdict}, answer ${ev.answer ?? "-"}, ` +
        `threshold ${fmtScore(ev.threshold)}, top score ${fmtScore(ev.top_score)}`
      );
    }
  }
}

export function renderTranscript(events: TranscriptEvent[]): string[] {
  return events.map(transcriptLine);
}

export interface VerdictView {
  headline: string;
  threshold: string;
  candidates: { rank: number; entity: string; score: string }[];
}

/** Verdict panel content: the call, the applied cutoff, the top ten. */
export function verdictView(outcome: DoneSummary): VerdictView {
  let headline: string;
  if (outcome.verdict === "answer") {
    headline = `Answer: ${outcome.answer} (top score ${fmtScore(outcome.topScore)})`;
  } else if (outcome.verdict === "reject") {
    headline = `Rejected: no candidate clears the threshold (top score ${fmtScore(
      outcome.topScore,
    )})`;
  } else {
    headline = "Unanswerable: the query mentions symbols the engine still lacks";
  }
  return {
    headline,
    threshold: `threshold ${fmtScore(outcome.threshold)}`,
    candidates: outcome.top.slice(0, 10).map(([entity, score], i) => ({
      rank: i + 1,
      entity,
      score: fmtScore(score),
    })),
  };
}

export interface Vocabulary {
  entities: string[];
  relations: string[];
}

export function vocabularyFrom(stats: KbStats): Vocabulary {
  return { entities: stats.entities, relations: stats.relations };
}

/** Case-insensitive prefix matches first, then substring matches. */
export function completions(names: string[], typed: string, limit = 8): string[] {
  const q = typed.toLowerCase();
  if (!q) return names.slice(0, limit);
  const starts: string[] = [];
  const contains: string[] = [];
  for (const name of names) {
    const n = name.toLowerCase();
    if (n.startsWith(q)) starts.push(name);
    else if (n.includes(q)) contains.push(name);
    if (starts.length >= limit) break;
  }
  return starts.concat(contains).slice(0, limit);
}

export function expectedDiffidentSize(rho: number, n: number): number {
  if (n === 0) return 0;
  return Math.ceil((rho * n) / 100);
}

export interface PerfRow {
  name: string;
  mean: number;
  count: number;
  diffident: boolean;
}

/** Per-relation ranking quality from the performance buffer, worst first. */
export function relationPerfRows(buffers: BuffersPayload): PerfRow[] {
  const diffident = new Set(buffers.diffident.relations);
  return Object.entries(buffers.performance.relations)
    .map(([name, e]) => ({
      name,
      mean: e.mean,
      count: e.count,
      diffident: diffident.has(name),
    }))
    .sort((a, b) => a.mean - b.mean || (a.name < b.name ? -1 : 1));
}

export interface GrowthPoint {
  at: number;
  triples: number;
}

/** Append a poll sample only when the store actually grew or shrank. */
export function appendGrowth(
  history: GrowthPoint[],
  triples: number,
  at: number,
): GrowthPoint[] {
  const last = history[history.length - 1];
  if (last && last.triples === triples) return history;
  return [...history, { at, triples }];
}
