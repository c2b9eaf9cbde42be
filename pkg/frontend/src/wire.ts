/** Wire types for the engine service. Shapes mirror the JSON payloads
 * exactly; nothing here is invented on the client side. */

export const WIRE_VERSION = 1;

export type DirectionName = "tail" | "head";
export type VerdictName = "answer" | "reject" | "unanswerable";

export interface WireTriple {
  head: string;
  relation: string;
  tail: string;
}

export interface QueryInput {
  direction: DirectionName;
  entity: string;
  relation: string;
}

/** Session states published by the service worker thread. */
export type SessionState =
  | { kind: "starting" }
  | { kind: "need_clue"; relation: string; max_n: number }
  | { kind: "need_entity_fact"; entity: string; max_n: number }
  | {
      kind: "done";
      verdict: VerdictName;
      answer: string | null;
      threshold: number;
      top_score: number | null;
      open_world: boolean;
      top: [string, number][];
    }
  | { kind: "aborted"; reason: string };

export interface SessionPayload {
  v: number;
  session_id: string;
  state: SessionState;
}

/** Transcript events as the engine records them. The client renders
 * these verbatim; it never rewrites or reorders them. */
export type TranscriptEvent =
  | {
      event: "query";
      direction: DirectionName;
      entity: string;
      relation: string;
      entity_known?: boolean;
      relation_known?: boolean;
    }
  | { event: "need_clue"; relation: string; max_n: number }
  | { event: "need_entity_fact"; entity: string; max_n: number }
  | { event: "facts_posted"; n: number }
  | { event: "clue_request"; relation: string; max_n: number }
  | { event: "fact_request"; entity: string; max_n: number }
  | {
      event: "clues" | "facts";
      offered: number;
      accepted: number;
      duplicates: number;
      triples: [string, string, string][];
    }
  | {
      event: "training";
      epochs: number;
      n_triples: number;
      batches: number;
      mean_loss: number | null;
      mean_hinge: number | null;
      negative_shortfalls: number;
    }
  | { event: "validation"; n_tuples: number; mean_rr: number | null }
  | {
      event: "verdict";
      verdict: VerdictName;
      answer?: string | null;
      threshold?: number;
      top_score?: number | null;
      top?: [string, number][];
    };

export interface SessionDetail extends SessionPayload {
  transcript: TranscriptEvent[];
}

export interface KbStats {
  v: number;
  stale: boolean;
  n_entities: number;
  n_relations: number;
  n_triples: number;
  entities: string[];
  relations: string[];
}

export interface BufferEntry {
  value: number;
  count: number;
}

export interface PerfEntry {
  mean: number;
  count: number;
}

export interface BuffersPayload {
  v: number;
  stale: boolean;
  thresholds: {
    entities: Record<string, BufferEntry>;
    relations: Record<string, BufferEntry>;
  };
  performance: {
    entities: Record<string, PerfEntry>;
    relations: Record<string, PerfEntry>;
  };
  diffident: { entities: string[]; relations: string[]; rho: number };
}

export interface MetricsPayload {
  v: number;
  sessions_run: number;
  sessions_aborted: number;
  verdicts: Record<string, number>;
  facts_acquired: number;
  mean_session_seconds: number | null;
}
