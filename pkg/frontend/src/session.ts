/** Chat session state machine.
 *
 * One controller owns at most one live session. The turn list is the
 * conversational view (who said what); the authoritative transcript is
 * whatever GET /sessions/{id} returns and is stored verbatim alongside.
 * Fact replies are only possible while the engine has a request pending;
 * anything else is a state-machine violation and never reaches the wire.
 */

import { ApiClient } from "./api.js";
import {
  QueryInput,
  SessionPayload,
  SessionState,
  TranscriptEvent,
  WireTriple,
} from "./wire.js";

export type Author = "human" | "engine";

export type TurnKind = "query" | "clue_request" | "fact_request" | "fact_reply" | "verdict";

export interface ChatTurn {
  author: Author;
  kind: TurnKind;
  payload: Record<string, unknown>;
  timestamp: number;
}

export interface PendingRequest {
  kind: "clue" | "entity_fact";
  subject: string;
  maxN: number;
}

export type Phase = "idle" | "awaiting_facts" | "done" | "aborted";

export class StateMachineViolation extends Error {}

export interface DoneSummary {
  verdict: string;
  answer: string | null;
  threshold: number;
  topScore: number | null;
  openWorld: boolean;
  top: [string, number][];
}

export class SessionController {
  phase: Phase = "idle";
  sessionId: string | null = null;
  turns: ChatTurn[] = [];
  pending: PendingRequest | null = null;
  outcome: DoneSummary | null = null;
  abortReason: string | null = null;
  /** Server-side transcript, byte-for-byte as last fetched. */
  transcript: TranscriptEvent[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly now: () => number = () => Date.now(),
  ) {}

  get busy(): boolean {
    return this.phase === "awaiting_facts";
  }

  private turn(author: Author, kind: TurnKind, payload: Record<string, unknown>): void {
    this.turns.push({ author, kind, payload, timestamp: this.now() });
  }

  async start(query: QueryInput): Promise<Phase> {
    if (this.busy) {
      throw new StateMachineViolation("a session is already waiting for facts");
    }
    this.phase = "idle";
    this.sessionId = null;
    this.turns = [];
    this.pending = null;
    this.outcome = null;
    this.abortReason = null;
    this.transcript = [];
    this.turn("human", "query", { ...query });
    const payload = await this.api.startSession(query);
    this.sessionId = payload.session_id;
    await this.apply(payload);
    return this.phase;
  }

  /** Answer the pending request with human-entered triples, verbatim.
   * An empty list declines; the engine then proceeds without them. */
  async submitFacts(triples: WireTriple[]): Promise<Phase> {
    if (!this.pending || !this.sessionId) {
      throw new StateMachineViolation("no fact request is pending");
    }
    this.turn("human", "fact_reply", {
      request: this.pending.kind,
      subject: this.pending.subject,
      triples: triples.map((t) => ({ ...t })),
    });
    this.pending = null;
    const payload = await this.api.postFacts(this.sessionId, triples);
    await this.apply(payload);
    return this.phase;
  }

  decline(): Promise<Phase> {
    return this.submitFacts([]);
  }

  private async apply(payload: SessionPayload): Promise<void> {
    const state: SessionState = payload.state;
    switch (state.kind) {
      case "starting":
        break;
      case "need_clue":
        this.pending = { kind: "clue", subject: state.relation, maxN: state.max_n };
        this.phase = "awaiting_facts";
        this.turn("engine", "clue_request", {
          relation: state.relation,
          max_n: state.max_n,
        });
        break;
      case "need_entity_fact":
        this.pending = { kind: "entity_fact", subject: state.entity, maxN: state.max_n };
        this.phase = "awaiting_facts";
        this.turn("engine", "fact_request", {
          entity: state.entity,
          max_n: state.max_n,
        });
        break;
      case "done":
        this.pending = null;
        this.phase = "done";
        this.outcome = {
          verdict: state.verdict,
          answer: state.answer,
          threshold: state.threshold,
          topScore: state.top_score,
          openWorld: state.open_world,
          top: state.top,
        };
        this.turn("engine", "verdict", {
          verdict: state.verdict,
          answer: state.answer,
          threshold: state.threshold,
          top_score: state.top_score,
          top: state.top,
        });
        await this.refreshTranscript();
        break;
      case "aborted":
        this.pending = null;
        this.phase = "aborted";
        this.abortReason = state.reason;
        await this.refreshTranscript();
        break;
    }
  }

  /** Pull the authoritative transcript; stored exactly as received. */
  async refreshTranscript(): Promise<TranscriptEvent[]> {
    if (!this.sessionId) return [];
    const detail = await this.api.getSession(this.sessionId);
    this.transcript = detail.transcript;
    return this.transcript;
  }
}
