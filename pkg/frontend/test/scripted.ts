/** A scripted stand-in for the engine service.
 *
 * Speaks the exact wire shapes: versioned payloads, session states,
 * facts_posted markers while a session is in flight, and a final
 * transcript in the engine's own event vocabulary once it completes.
 * Teaching is real in miniature: posted triples register their symbols,
 * and later queries over registered symbols complete without asking.
 */

import { FetchLike, HttpResponse } from "../src/api.js";
import {
  QueryInput,
  SessionState,
  TranscriptEvent,
  WIRE_VERSION,
  WireTriple,
} from "../src/wire.js";

interface FakeSession {
  id: string;
  query: QueryInput;
  state: SessionState;
  turns: TranscriptEvent[];
  askedClue: boolean;
  askedFact: boolean;
  clues: WireTriple[];
  facts: WireTriple[];
  eKnownAtStart: boolean;
  rKnownAtStart: boolean;
}

function respond(status: number, body: unknown): HttpResponse {
  return { status, json: async () => body };
}

export class ScriptedService {
  entities = new Set<string>(["rome", "paris", "italy", "france"]);
  relations = new Set<string>(["capital_of"]);
  triples: WireTriple[] = [
    { head: "rome", relation: "capital_of", tail: "italy" },
    { head: "paris", relation: "capital_of", tail: "france" },
  ];
  sessions = new Map<string, FakeSession>();
  statesSeen: string[] = [];
  postCount = 0;
  networkDown = false;
  busy = false;
  private nextId = 0;

  private register(t: WireTriple): void {
    this.entities.add(t.head);
    this.entities.add(t.tail);
    this.relations.add(t.relation);
    this.triples.push(t);
  }

  private publish(s: FakeSession, state: SessionState): void {
    s.state = state;
    this.statesSeen.push(`${s.id}:${state.kind}`);
    if (state.kind === "need_clue" || state.kind === "need_entity_fact") {
      const { kind, ...rest } = state;
      s.turns.push({ event: kind, ...rest } as TranscriptEvent);
    }
  }

  private advance(s: FakeSession): void {
    if (!this.relations.has(s.query.relation) && !s.askedClue) {
      s.askedClue = true;
      this.publish(s, { kind: "need_clue", relation: s.query.relation, max_n: 1 });
      return;
    }
    if (!this.entities.has(s.query.entity) && !s.askedFact) {
      s.askedFact = true;
      this.publish(s, { kind: "need_entity_fact", entity: s.query.entity, max_n: 3 });
      return;
    }
    this.finish(s);
  }

  private finish(s: FakeSession): void {
    const known =
      this.entities.has(s.query.entity) && this.relations.has(s.query.relation);
    const transcript: TranscriptEvent[] = [
      {
        event: "query",
        direction: s.query.direction,
        entity: s.query.entity,
        relation: s.query.relation,
        entity_known: s.eKnownAtStart,
        relation_known: s.rKnownAtStart,
      },
    ];
    if (s.askedClue) {
      transcript.push({ event: "clue_request", relation: s.query.relation, max_n: 1 });
      transcript.push({
        event: "clues",
        offered: s.clues.length,
        accepted: s.clues.length,
        duplicates: 0,
        triples: s.clues.map((t) => [t.head, t.relation, t.tail]),
      });
    }
    if (s.askedFact) {
      transcript.push({ event: "fact_request", entity: s.query.entity, max_n: 3 });
      transcript.push({
        event: "facts",
        offered: s.facts.length,
        accepted: s.facts.length,
        duplicates: 0,
        triples: s.facts.map((t) => [t.head, t.relation, t.tail]),
      });
    }
    let state: SessionState;
    if (!known) {
      transcript.push({ event: "verdict", verdict: "unanswerable" });
      state = {
        kind: "done",
        verdict: "unanswerable",
        answer: null,
        threshold: 0,
        top_score: null,
        open_world: !(s.eKnownAtStart && s.rKnownAtStart),
        top: [],
      };
    } else {
      transcript.push({
        event: "training",
        epochs: 2,
        n_triples: this.triples.length,
        batches: 2,
        mean_loss: 0.41,
        mean_hinge: 0.4,
        negative_shortfalls: 0,
      });
      transcript.push({ event: "validation", n_tuples: 3, mean_rr: 0.61 });
      const top: [string, number][] = [...this.entities]
        .sort()
        .slice(0, 10)
        .map((name, i) => [name, 2.0 - i * 0.1]);
      transcript.push({
        event: "verdict",
        verdict: "answer",
        answer: top[0][0],
        threshold: 0.9,
        top_score: top[0][1],
        top,
      });
      state = {
        kind: "done",
        verdict: "answer",
        answer: top[0][0],
        threshold: 0.9,
        top_score: top[0][1],
        open_world: !(s.eKnownAtStart && s.rKnownAtStart),
        top,
      };
    }
    s.turns = transcript;
    this.publish(s, state);
  }

  start(query: QueryInput): FakeSession {
    this.nextId += 1;
    const s: FakeSession = {
      id: `s${String(this.nextId).padStart(4, "0")}`,
      query,
      state: { kind: "starting" },
      turns: [
        {
          event: "query",
          direction: query.direction,
          entity: query.entity,
          relation: query.relation,
        },
      ],
      askedClue: false,
      askedFact: false,
      clues: [],
      facts: [],
      eKnownAtStart: this.entities.has(query.entity),
      rKnownAtStart: this.relations.has(query.relation),
    };
    this.sessions.set(s.id, s);
    this.advance(s);
    return s;
  }

  postFacts(id: string, triples: WireTriple[]): FakeSession | HttpResponse {
    const s = this.sessions.get(id);
    if (!s) return respond(404, { detail: { error: `no session ${id}` } });
    const waiting =
      s.state.kind === "need_clue" || s.state.kind === "need_entity_fact";
    if (!waiting) {
      return respond(409, {
        detail: { error: `session ${id} is not waiting for facts` },
      });
    }
    this.postCount += 1;
    s.turns.push({ event: "facts_posted", n: triples.length });
    for (const t of triples) this.register(t);
    if (s.state.kind === "need_clue") s.clues = triples;
    else s.facts = triples;
    this.advance(s);
    return s;
  }
}

/** Routes fetch calls into the scripted service. */
export function scriptedFetch(service: ScriptedService): FetchLike {
  return async (url, init) => {
    if (service.networkDown) throw new TypeError("fetch failed");
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (method === "POST" && path === "/sessions") {
      if (body.v !== WIRE_VERSION) {
        return respond(400, { detail: { error: `unsupported payload version ${body.v}` } });
      }
      if (service.busy) {
        return respond(409, { detail: { error: "engine busy with another session" } });
      }
      const s = service.start(body.query);
      return respond(200, { v: WIRE_VERSION, session_id: s.id, state: s.state });
    }

    const factsMatch = path.match(/^\/sessions\/([^/]+)\/facts$/);
    if (method === "POST" && factsMatch) {
      const out = service.postFacts(factsMatch[1], body.triples);
      if ("status" in out) return out;
      return respond(200, { v: WIRE_VERSION, session_id: out.id, state: out.state });
    }

    const getMatch = path.match(/^\/sessions\/([^/]+)$/);
    if (method === "GET" && getMatch) {
      const s = service.sessions.get(getMatch[1]);
      if (!s) return respond(404, { detail: { error: `no session ${getMatch[1]}` } });
      return respond(200, {
        v: WIRE_VERSION,
        session_id: s.id,
        state: s.state,
        transcript: JSON.parse(JSON.stringify(s.turns)),
      });
    }

    if (method === "GET" && path === "/kb/stats") {
      return respond(200, {
        v: WIRE_VERSION,
        stale: false,
        n_entities: service.entities.size,
        n_relations: service.relations.size,
        n_triples: service.triples.length,
        entities: [...service.entities].sort(),
        relations: [...service.relations].sort(),
      });
    }

    return respond(404, { detail: { error: `no route ${method} ${path}` } });
  };
}
