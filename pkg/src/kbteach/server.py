"""HTTP session API: the asking channel turned inside out.

In-process evaluation hands the engine a channel object and blocks until
the simulated user replies.  Over HTTP the roles flip: the engine runs
in a worker thread, and whenever it wants supporting facts the session
parks in a ``need_clue`` or ``need_entity_fact`` state until a client
posts triples.  One engine instance serves the whole process and only
one session may mutate it at a time; a second session arriving while
the engine is busy either waits briefly or gets a 409, depending on
configuration.  Read-only endpoints serve from a snapshot refreshed
after every session, with a ``stale`` marker when the engine is busy.

Acquired facts outlive everything: they are appended to the fact log
and the checkpoint is rewritten after each session, whether the session
finished with a verdict or timed out mid-conversation.
"""

from __future__ import annotations

import copy
import queue
import threading
import time
from typing import Any

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .checkpoint import save_checkpoint
from .config import EngineConfig
from .decision import Direction, Query, Verdict
from .engine import ChannelError, Engine, UserChannel
from .kb import Triple

WIRE_VERSION = 1

_NAME_BAD = ("\t", "\n", "\r", "|")


class QueryBody(BaseModel):
    v: int
    query: dict[str, str]


class FactsBody(BaseModel):
    v: int
    triples: list[dict[str, str]] = Field(default_factory=list)


def _check_version(v: int) -> None:
    if v != WIRE_VERSION:
        raise HTTPException(
            status_code=400,
            detail={"error": f"unsupported payload version {v}, expected {WIRE_VERSION}"},
        )


def _parse_query(payload: dict[str, str]) -> Query:
    try:
        direction = Direction(payload["direction"])
        entity = payload["entity"]
        relation = payload["relation"]
    except (KeyError, ValueError) as exc:
        raise HTTPException(
            status_code=400,
            detail={"error": f"bad query payload: {exc}"},
        ) from exc
    for name in (entity, relation):
        if not name or any(c in name for c in _NAME_BAD):
            raise HTTPException(status_code=400, detail={"error": f"bad symbol name {name!r}"})
    return Query(direction, entity, relation)


def _parse_triples(rows: list[dict[str, str]]) -> list[Triple]:
    triples = []
    for row in rows:
        try:
            head, relation, tail = row["head"], row["relation"], row["tail"]
        except KeyError as exc:
            raise HTTPException(
                status_code=400, detail={"error": f"triple missing field {exc}"}
            ) from exc
        for name in (head, relation, tail):
            if not name or any(c in name for c in _NAME_BAD):
                raise HTTPException(
                    status_code=400, detail={"error": f"bad symbol name {name!r}"}
                )
        triples.append(Triple(head, relation, tail))
    return triples


class _LiveSession:
    """One engine conversation and its observable state machine.

    States: starting -> (need_clue | need_entity_fact)* -> done | aborted.
    The worker thread publishes transitions; handler threads wait on the
    version counter so a facts POST returns the state its reply caused.
    """

    def __init__(self, session_id: str, query: Query):
        self.id = session_id
        self.query = query
        self.cond = threading.Condition()
        self.state: dict[str, Any] = {"kind": "starting"}
        self.version = 0
        self.reply_q: queue.Queue[list[Triple]] = queue.Queue(maxsize=1)
        self.turns: list[dict] = []

    def publish(self, state: dict[str, Any]) -> None:
        with self.cond:
            self.state = state
            self.version += 1
            self.cond.notify_all()

    def await_version_above(self, seen: int, timeout: float) -> dict[str, Any]:
        with self.cond:
            self.cond.wait_for(lambda: self.version > seen, timeout)
            return dict(self.state)

    @property
    def waiting(self) -> bool:
        return self.state["kind"] in ("need_clue", "need_entity_fact")

    @property
    def finished(self) -> bool:
        return self.state["kind"] in ("done", "aborted")


class _WireChannel(UserChannel):
    """Blocks the engine thread until a client posts the requested facts."""

    def __init__(self, session: _LiveSession, timeout: float):
        self.session = session
        self.timeout = timeout

    def _ask(self, state: dict[str, Any]) -> list[Triple]:
        self.session.turns.append({"event": state["kind"], **{
            k: v for k, v in state.items() if k != "kind"
        }})
        self.session.publish(state)
        try:
            return self.session.reply_q.get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelError(
                f"no facts arrived within {self.timeout}s for {state['kind']}"
            ) from None

    def request_clues(self, relation: str, max_n: int) -> list[Triple]:
        return self._ask({"kind": "need_clue", "relation": relation, "max_n": max_n})

    def request_entity_facts(self, entity: str, max_n: int) -> list[Triple]:
        return self._ask({"kind": "need_entity_fact", "entity": entity, "max_n": max_n})


class SessionService:
    """Engine ownership, session registry, persistence, and snapshots."""

    def __init__(
        self,
        engine: Engine,
        config: EngineConfig,
        state_path: str | None = None,
        append_log: str | None = None,
        fact_timeout: float = 600.0,
        busy_wait: float = 0.0,
        worker_wait: float = 600.0,
    ):
        self.engine = engine
        self.config = config
        self.state_path = state_path
        self.append_log = append_log
        self.fact_timeout = fact_timeout
        self.busy_wait = busy_wait
        self.worker_wait = worker_wait
        # a plain Lock on purpose: acquired by the accepting handler
        # thread, released by the session worker thread
        self.engine_lock = threading.Lock()
        self.sessions: dict[str, _LiveSession] = {}
        self.registry_lock = threading.Lock()
        self.n_created = 0
        self.verdicts = {v.value: 0 for v in Verdict}
        self.aborted = 0
        self.facts_acquired = 0
        self.total_session_seconds = 0.0
        self.snapshot = self._build_snapshot()

    # -- snapshots ---------------------------------------------------------

    def _build_snapshot(self) -> dict[str, Any]:
        kb = self.engine.kb
        thr = self.engine.thresholds
        perf = self.engine.perf
        diff = self.engine.diffident
        return {
            "kb": {
                "n_entities": kb.n_entities,
                "n_relations": kb.n_relations,
                "n_triples": kb.n_triples,
                "entities": kb.entity_names(),
                "relations": kb.relation_names(),
            },
            "buffers": {
                "thresholds": {
                    "entities": {n: {"value": e.value, "count": e.count}
                                 for n, e in sorted(thr.entities.items())},
                    "relations": {n: {"value": e.value, "count": e.count}
                                  for n, e in sorted(thr.relations.items())},
                },
                "performance": {
                    "entities": {n: {"mean": e.mean, "count": e.count}
                                 for n, e in sorted(perf.entities.items())},
                    "relations": {n: {"mean": e.mean, "count": e.count}
                                  for n, e in sorted(perf.relations.items())},
                },
                "diffident": {
                    "entities": sorted(diff.entities),
                    "relations": sorted(diff.relations),
                    "rho": self.engine.config.rho,
                },
            },
        }

    def read_snapshot(self, section: str) -> tuple[dict[str, Any], bool]:
        """Fresh data when the engine is idle, else the cached copy."""
        if self.engine_lock.acquire(timeout=0.2):
            try:
                self.snapshot = self._build_snapshot()
                stale = False
            finally:
                self.engine_lock.release()
        else:
            stale = True
        return copy.deepcopy(self.snapshot[section]), stale

    # -- persistence ---------------------------------------------------------

    def _persist(self, new_triples: list[Triple]) -> None:
        if self.append_log and new_triples:
            with open(self.append_log, "a", encoding="utf-8") as fh:
                for t in new_triples:
                    fh.write(f"{t.head}\t{t.relation}\t{t.tail}\t{t.split.value}\n")
        if self.state_path:
            save_checkpoint(self.engine, self.config, self.state_path)

    # -- session lifecycle -----------------------------------------------------

    def start_session(self, query: Query) -> _LiveSession:
        if not self.engine_lock.acquire(timeout=self.busy_wait):
            raise HTTPException(
                status_code=409,
                detail={"error": "engine busy with another session"},
            )
        with self.registry_lock:
            self.n_created += 1
            session = _LiveSession(f"s{self.n_created:04d}", query)
            self.sessions[session.id] = session
        session.turns.append(
            {
                "event": "query",
                "direction": query.direction.value,
                "entity": query.entity,
                "relation": query.relation,
            }
        )
        worker = threading.Thread(
            target=self._run_session, args=(session, query), daemon=True
        )
        worker.start()
        session.await_version_above(0, timeout=self.worker_wait)
        return session

    def _run_session(self, session: _LiveSession, query: Query) -> None:
        # the lock is held until state, persistence, and the published
        # outcome all agree; only then may the next session mutate
        channel = _WireChannel(session, self.fact_timeout)
        n_before = self.engine.kb.n_triples
        started = time.monotonic()
        try:
            try:
                outcome = self.engine.process_query(query, channel)
            except ChannelError as exc:
                # facts inserted before the timeout stay; give them
                # embedding rows so the checkpoint stays loadable
                self.engine.model.sync_with(self.engine.kb, self.engine.rng)
                new = list(self.engine.kb.triples())[n_before:]
                self.facts_acquired += len(new)
                self._persist(new)
                self.aborted += 1
                session.publish({"kind": "aborted", "reason": str(exc)})
                return
            new = list(self.engine.kb.triples())[n_before:]
            self.facts_acquired += len(new)
            self._persist(new)
            self.verdicts[outcome.verdict.value] += 1
            session.turns = outcome.transcript
            done = {
                "kind": "done",
                "verdict": outcome.verdict.value,
                "answer": outcome.answer,
                "threshold": outcome.threshold,
                "top_score": outcome.top_score,
                "open_world": outcome.open_world,
                "top": [],
            }
            if outcome.decision is not None and outcome.decision.ranking is not None:
                kb = self.engine.kb
                done["top"] = [
                    [kb.entity_name(int(eid)), float(outcome.decision.scores[int(eid)])]
                    for eid in outcome.decision.ranking[:10]
                ]
            session.publish(done)
        finally:
            self.total_session_seconds += time.monotonic() - started
            self.engine_lock.release()

    def get_session(self, session_id: str) -> _LiveSession:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(
                status_code=404, detail={"error": f"no session {session_id}"}
            )
        return session

    def post_facts(self, session_id: str, triples: list[Triple]) -> _LiveSession:
        session = self.get_session(session_id)
        with session.cond:
            if not session.waiting:
                raise HTTPException(
                    status_code=409,
                    detail={
                        "error": f"session {session_id} is not waiting for facts "
                        f"(state {session.state['kind']})"
                    },
                )
            seen = session.version
        session.turns.append(
            {"event": "facts_posted", "n": len(triples)}
        )
        session.reply_q.put(triples)
        session.await_version_above(seen, timeout=self.worker_wait)
        return session


def _state_payload(session: _LiveSession) -> dict[str, Any]:
    return {"v": WIRE_VERSION, "session_id": session.id, "state": session.state}


def create_app(
    engine: Engine,
    config: EngineConfig,
    state_path: str | None = None,
    append_log: str | None = None,
    fact_timeout: float = 600.0,
    busy_wait: float = 0.0,
) -> FastAPI:
    service = SessionService(
        engine,
        config,
        state_path=state_path,
        append_log=append_log,
        fact_timeout=fact_timeout,
        busy_wait=busy_wait,
    )
    app = FastAPI(title="kbteach", version=str(WIRE_VERSION))
    app.state.service = service

    @app.get("/health")
    def health() -> dict:
        return {
            "v": WIRE_VERSION,
            "status": "ok",
            "sessions_run": engine.sessions_run,
        }

    @app.get("/kb/stats")
    def kb_stats() -> dict:
        data, stale = service.read_snapshot("kb")
        return {"v": WIRE_VERSION, "stale": stale, **data}

    @app.get("/buffers")
    def buffers() -> dict:
        data, stale = service.read_snapshot("buffers")
        return {"v": WIRE_VERSION, "stale": stale, **data}

    @app.get("/metrics")
    def metrics() -> dict:
        n = engine.sessions_run + service.aborted
        return {
            "v": WIRE_VERSION,
            "sessions_run": engine.sessions_run,
            "sessions_aborted": service.aborted,
            "verdicts": dict(service.verdicts),
            "facts_acquired": service.facts_acquired,
            "mean_session_seconds": (
                service.total_session_seconds / n if n else None
            ),
        }

    @app.post("/sessions")
    def create_session(body: QueryBody) -> dict:
        _check_version(body.v)
        query = _parse_query(body.query)
        session = service.start_session(query)
        return _state_payload(session)

    @app.post("/sessions/{session_id}/facts")
    def post_facts(session_id: str, body: FactsBody) -> dict:
        _check_version(body.v)
        triples = _parse_triples(body.triples)
        session = service.post_facts(session_id, triples)
        return _state_payload(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        session = service.get_session(session_id)
        return {**_state_payload(session), "transcript": list(session.turns)}

    return app


def serve(
    engine: Engine,
    config: EngineConfig,
    host: str = "127.0.0.1",
    port: int = 8100,
    state_path: str | None = None,
    append_log: str | None = None,
    fact_timeout: float = 600.0,
    busy_wait: float = 0.0,
) -> None:
    import uvicorn

    app = create_app(
        engine,
        config,
        state_path=state_path,
        append_log=append_log,
        fact_timeout=fact_timeout,
        busy_wait=busy_wait,
    )
    print(f"serving on http://{host}:{port} "
          f"({engine.kb.n_entities} entities, {engine.kb.n_triples} triples)")
    uvicorn.run(app, host=host, port=port, log_level="warning")
