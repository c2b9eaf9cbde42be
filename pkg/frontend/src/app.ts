/** DOM wiring: one session panel, one dashboard, one controller per tab.
 *
 * All protocol logic lives in the controller and the api client; this
 * layer only moves values between the page and those modules.
 */

import { ApiClient, BusyError, NetworkError } from "./api.js";
import {
  appendGrowth,
  completions,
  expectedDiffidentSize,
  fmtScore,
  GrowthPoint,
  relationPerfRows,
  renderTranscript,
  verdictView,
  Vocabulary,
  vocabularyFrom,
} from "./format.js";
import { SessionController } from "./session.js";
import { DirectionName, WireTriple } from "./wire.js";

const POLL_MS = 3000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

function li(text: string, className?: string): HTMLLIElement {
  const item = document.createElement("li");
  item.textContent = text;
  if (className) item.className = className;
  return item;
}

interface SessionLogRow {
  id: string;
  query: string;
  verdict: string;
}

export class App {
  private readonly api: ApiClient;
  private readonly controller: SessionController;
  private vocab: Vocabulary = { entities: [], relations: [] };
  private growth: GrowthPoint[] = [];
  private recent: SessionLogRow[] = [];
  private lastAction: (() => Promise<void>) | null = null;

  constructor(base: string) {
    this.api = new ApiClient(base);
    this.controller = new SessionController(this.api);
  }

  start(): void {
    el<HTMLFormElement>("query-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.guard(() => this.submitQuery());
    });
    el<HTMLFormElement>("fact-form").addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.guard(() => this.sendFacts(this.readTriple() ? [this.readTriple()!] : []));
    });
    el<HTMLButtonElement>("decline-btn").addEventListener("click", () => {
      void this.guard(() => this.sendFacts([]));
    });
    el<HTMLButtonElement>("retry-btn").addEventListener("click", () => {
      const action = this.lastAction;
      if (action) void this.guard(action);
    });
    this.attachAutocomplete("q-entity", () => this.vocab.entities);
    this.attachAutocomplete("q-relation", () => this.vocab.relations);
    this.attachAutocomplete("f-head", () => this.vocab.entities);
    this.attachAutocomplete("f-relation", () => this.vocab.relations);
    this.attachAutocomplete("f-tail", () => this.vocab.entities);
    this.render();
    void this.poll();
    setInterval(() => void this.poll(), POLL_MS);
  }

  /** Runs an action, routing retryable failures to the banner. */
  private async guard(action: () => Promise<void>): Promise<void> {
    this.lastAction = action;
    const banner = el<HTMLDivElement>("banner");
    banner.hidden = true;
    try {
      await action();
      this.lastAction = null;
    } catch (exc) {
      if (exc instanceof NetworkError || exc instanceof BusyError) {
        banner.hidden = false;
        el<HTMLSpanElement>("banner-text").textContent =
          exc instanceof BusyError
            ? "Engine is busy with another session."
            : "Service unreachable.";
      } else {
        banner.hidden = false;
        el<HTMLSpanElement>("banner-text").textContent = String(exc);
      }
    }
    this.render();
  }

  private async submitQuery(): Promise<void> {
    const direction = el<HTMLSelectElement>("q-direction").value as DirectionName;
    const entity = el<HTMLInputElement>("q-entity").value.trim();
    const relation = el<HTMLInputElement>("q-relation").value.trim();
    if (!entity || !relation) return;
    await this.controller.start({ direction, entity, relation });
    this.logIfDone();
  }

  /** Reads the triple exactly as typed; no field is ever filled in. */
  private readTriple(): WireTriple | null {
    const head = el<HTMLInputElement>("f-head").value.trim();
    const relation = el<HTMLInputElement>("f-relation").value.trim();
    const tail = el<HTMLInputElement>("f-tail").value.trim();
    if (!head || !relation || !tail) return null;
    return { head, relation, tail };
  }

  private async sendFacts(triples: WireTriple[]): Promise<void> {
    await this.controller.submitFacts(triples);
    for (const id of ["f-head", "f-relation", "f-tail"]) {
      el<HTMLInputElement>(id).value = "";
    }
    this.logIfDone();
  }

  private logIfDone(): void {
    const c = this.controller;
    if (c.phase !== "done" || !c.sessionId || !c.outcome) return;
    const q = c.turns[0]?.payload ?? {};
    this.recent.unshift({
      id: c.sessionId,
      query: `${q["direction"]} (${q["entity"]}, ${q["relation"]})`,
      verdict: c.outcome.verdict,
    });
    this.recent = this.recent.slice(0, 12);
  }

  private attachAutocomplete(id: string, names: () => string[]): void {
    const input = el<HTMLInputElement>(id);
    const listId = `${id}-options`;
    const list = document.createElement("datalist");
    list.id = listId;
    document.body.appendChild(list);
    input.setAttribute("list", listId);
    input.addEventListener("input", () => {
      clear(list);
      for (const name of completions(names(), input.value)) {
        const option = document.createElement("option");
        option.value = name;
        list.appendChild(option);
      }
    });
  }

  private async poll(): Promise<void> {
    try {
      const stats = await this.api.kbStats();
      this.vocab = vocabularyFrom(stats);
      this.growth = appendGrowth(this.growth, stats.n_triples, Date.now());
      const buffers = await this.api.buffers();
      const metrics = await this.api.metrics();

      el<HTMLSpanElement>("stale").hidden = !(stats.stale || buffers.stale);
      el<HTMLSpanElement>("kb-line").textContent =
        `${stats.n_entities} entities, ${stats.n_relations} relations, ` +
        `${stats.n_triples} triples`;
      el<HTMLSpanElement>("metrics-line").textContent =
        `${metrics.sessions_run} sessions, ${metrics.facts_acquired} facts taught`;

      const growthList = el<HTMLUListElement>("growth");
      clear(growthList);
      for (const point of this.growth.slice(-10)) {
        growthList.appendChild(
          li(`${new Date(point.at).toLocaleTimeString()}: ${point.triples}`),
        );
      }

      const perfList = el<HTMLUListElement>("perf");
      clear(perfList);
      for (const row of relationPerfRows(buffers).slice(0, 15)) {
        perfList.appendChild(
          li(
            `${row.name}: mrr ${fmtScore(row.mean)} over ${row.count}` +
              (row.diffident ? " (diffident)" : ""),
            row.diffident ? "diffident" : undefined,
          ),
        );
      }

      const d = buffers.diffident;
      el<HTMLSpanElement>("diffident-line").textContent =
        `relations [${d.relations.join(", ")}] entities [${d.entities.join(", ")}] ` +
        `(rho ${d.rho}: expect ` +
        `${expectedDiffidentSize(d.rho, Object.keys(buffers.performance.relations).length)}` +
        ` relations)`;
    } catch {
      el<HTMLSpanElement>("stale").hidden = false;
    }
    this.render();
  }

  private render(): void {
    const c = this.controller;

    const chat = el<HTMLUListElement>("chat");
    clear(chat);
    for (const turn of c.turns) {
      chat.appendChild(li(`${turn.author}: ${turn.kind}`, turn.author));
    }

    const transcript = el<HTMLUListElement>("transcript");
    clear(transcript);
    for (const line of renderTranscript(c.transcript)) {
      transcript.appendChild(li(line));
    }

    const asking = el<HTMLDivElement>("asking");
    if (c.pending) {
      asking.hidden = false;
      el<HTMLSpanElement>("asking-text").textContent =
        c.pending.kind === "clue"
          ? `The engine asks for up to ${c.pending.maxN} fact(s) using relation ` +
            `"${c.pending.subject}".`
          : `The engine asks for up to ${c.pending.maxN} fact(s) about entity ` +
            `"${c.pending.subject}".`;
    } else {
      asking.hidden = true;
    }

    // a fact reply outside a pending request must be impossible to click
    el<HTMLButtonElement>("fact-send").disabled = !c.pending;
    el<HTMLButtonElement>("decline-btn").disabled = !c.pending;
    el<HTMLButtonElement>("query-send").disabled = c.busy;

    const verdict = el<HTMLDivElement>("verdict");
    if (c.outcome) {
      verdict.hidden = false;
      const view = verdictView(c.outcome);
      el<HTMLParagraphElement>("verdict-headline").textContent = view.headline;
      el<HTMLParagraphElement>("verdict-threshold").textContent = view.threshold;
      const top = el<HTMLOListElement>("verdict-top");
      clear(top);
      for (const cand of view.candidates) {
        top.appendChild(li(`${cand.entity} (${cand.score})`));
      }
    } else {
      verdict.hidden = true;
    }

    const sessions = el<HTMLUListElement>("recent");
    clear(sessions);
    for (const row of this.recent) {
      sessions.appendChild(li(`${row.id} ${row.query}: ${row.verdict}`));
    }

    if (c.phase === "aborted" && c.abortReason) {
      el<HTMLDivElement>("banner").hidden = false;
      el<HTMLSpanElement>("banner-text").textContent = `Session aborted: ${c.abortReason}`;
    }
  }
}
