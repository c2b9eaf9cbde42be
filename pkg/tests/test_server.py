import copy
import json
import math
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from kbteach.checkpoint import load_checkpoint
from kbteach.config import EngineConfig
from kbteach.engine import initial_training
from kbteach.server import create_app
from kbteach.simulate import SimulatedUser, WorldBuildConfig, build_world
from kbteach.synth import SynthConfig, synthetic_original_kb


SERVE_CONFIG = EngineConfig(dim=16, learning_rate=0.05, init_epochs=5, seed=31)


@pytest.fixture(scope="module")
def world():
    kb = synthetic_original_kb(
        SynthConfig(
            n_entities=180,
            n_clusters=6,
            n_sym_relations=4,
            hubs_per_cluster=2,
            member_fraction=0.5,
            relations_per_member=2,
            n_scatter_relations=2,
            scatter_triples=50,
        ),
        np.random.default_rng(31),
    )
    return build_world(
        kb, WorldBuildConfig(per_relation_cap=50), np.random.default_rng(31)
    )


@pytest.fixture(scope="module")
def base_engine(world):
    return initial_training(
        copy.deepcopy(world.base_kb),
        SERVE_CONFIG.model_hyper(),
        SERVE_CONFIG.session_config(),
        SERVE_CONFIG.init_epochs,
        np.random.default_rng(SERVE_CONFIG.seed),
    )


def fresh_client(base_engine, **kw):
    engine = copy.deepcopy(base_engine)
    app = create_app(engine, SERVE_CONFIG, **kw)
    return TestClient(app), engine


def teaching_query(world, engine):
    """A stream query whose entity and relation are both unseen."""
    for wq in world.queries:
        if not engine.kb.has_relation(wq.query.relation) and not engine.kb.has_entity(
            wq.query.entity
        ):
            return wq
    pytest.skip("world has no fully-unknown query")


def query_payload(q):
    return {
        "v": 1,
        "query": {
            "direction": q.direction.value,
            "entity": q.entity,
            "relation": q.relation,
        },
    }


def triples_payload(triples):
    return {
        "v": 1,
        "triples": [
            {"head": t.head, "relation": t.relation, "tail": t.tail} for t in triples
        ],
    }


def drive_session(client, wq, user):
    """Replay one query over the wire, answering requests from `user`."""
    resp = client.post("/sessions", json=query_payload(wq.query))
    assert resp.status_code == 200
    body = resp.json()
    sid = body["session_id"]
    state = body["state"]
    for _ in range(10):
        if state["kind"] == "need_clue":
            offered = user.request_clues(state["relation"], state["max_n"])
        elif state["kind"] == "need_entity_fact":
            offered = user.request_entity_facts(state["entity"], state["max_n"])
        else:
            break
        resp = client.post(f"/sessions/{sid}/facts", json=triples_payload(offered))
        assert resp.status_code == 200
        state = resp.json()["state"]
    return sid, state


def test_health_and_metrics_shapes(base_engine):
    client, _ = fresh_client(base_engine)
    health = client.get("/health").json()
    assert health == {"v": 1, "status": "ok", "sessions_run": 0}
    metrics = client.get("/metrics").json()
    assert metrics["v"] == 1
    assert metrics["sessions_run"] == 0
    assert set(metrics["verdicts"]) == {"answer", "reject", "unanswerable"}


def test_kb_stats_reports_base_counts(base_engine):
    client, engine = fresh_client(base_engine)
    stats = client.get("/kb/stats").json()
    assert stats["v"] == 1
    assert stats["stale"] is False
    assert stats["n_entities"] == engine.kb.n_entities
    assert stats["n_triples"] == engine.kb.n_triples
    assert len(stats["entities"]) == stats["n_entities"]
    assert len(stats["relations"]) == stats["n_relations"]


def test_buffers_expose_diffident_sets_of_documented_size(base_engine):
    client, engine = fresh_client(base_engine)
    body = client.get("/buffers").json()
    rho = body["diffident"]["rho"]
    for kind in ("entities", "relations"):
        n_tracked = len(body["performance"][kind])
        expected = math.ceil(rho * n_tracked / 100.0)
        assert len(body["diffident"][kind]) == expected
    for entry in body["thresholds"]["relations"].values():
        assert set(entry) == {"value", "count"}


def test_wire_session_equals_in_process_session(world, base_engine):
    wq = teaching_query(world, base_engine)
    in_proc_engine = copy.deepcopy(base_engine)
    user = SimulatedUser(world.user_kb, np.random.default_rng(77), pending=wq.query)
    outcome = in_proc_engine.process_query(wq.query, user)

    client, wire_engine = fresh_client(base_engine)
    twin = SimulatedUser(world.user_kb, np.random.default_rng(77), pending=wq.query)
    sid, state = drive_session(client, wq, twin)
    assert state["kind"] == "done"
    assert state["verdict"] == outcome.verdict.value
    assert state["answer"] == outcome.answer
    assert state["threshold"] == outcome.threshold
    assert state["top_score"] == outcome.top_score

    transcript = client.get(f"/sessions/{sid}").json()["transcript"]
    assert transcript == json.loads(json.dumps(outcome.transcript))
    # the engines themselves converged to the same state
    assert wire_engine.kb.n_triples == in_proc_engine.kb.n_triples
    assert wire_engine.sessions_run == in_proc_engine.sessions_run == 1


def test_teach_loop_suppresses_reasking(world, base_engine):
    config = EngineConfig(
        dim=16, learning_rate=0.05, init_epochs=5, seed=31, use_performance_buffer=False
    )
    engine = copy.deepcopy(base_engine)
    engine.config = config.session_config()
    client = TestClient(create_app(engine, config))

    wq = teaching_query(world, engine)
    user = SimulatedUser(world.user_kb, np.random.default_rng(5), pending=wq.query)
    sid, state = drive_session(client, wq, user)
    kinds = [t["event"] for t in client.get(f"/sessions/{sid}").json()["transcript"]]
    assert "clue_request" in kinds and "fact_request" in kinds

    # the same query again: both symbols are registered now and the
    # buffer policy is off, so the engine never asks back
    resp = client.post("/sessions", json=query_payload(wq.query))
    body = resp.json()
    assert body["state"]["kind"] == "done"
    kinds = [
        t["event"]
        for t in client.get(f"/sessions/{body['session_id']}").json()["transcript"]
    ]
    assert "clue_request" not in kinds and "fact_request" not in kinds


def test_zero_facts_still_yields_a_verdict(world, base_engine):
    client, _ = fresh_client(base_engine)
    wq = teaching_query(world, base_engine)
    resp = client.post("/sessions", json=query_payload(wq.query))
    body = resp.json()
    sid = body["session_id"]
    state = body["state"]
    while state["kind"] in ("need_clue", "need_entity_fact"):
        state = client.post(
            f"/sessions/{sid}/facts", json={"v": 1, "triples": []}
        ).json()["state"]
    assert state["kind"] == "done"
    assert state["verdict"] == "unanswerable"


def test_version_mismatch_is_rejected(base_engine):
    client, _ = fresh_client(base_engine)
    resp = client.post(
        "/sessions",
        json={"v": 2, "query": {"direction": "tail", "entity": "a", "relation": "b"}},
    )
    assert resp.status_code == 400
    assert "version" in resp.json()["detail"]["error"]


def test_malformed_payloads_are_structured_errors(base_engine):
    client, _ = fresh_client(base_engine)
    assert client.post("/sessions", json={"v": 1}).status_code == 422
    resp = client.post(
        "/sessions",
        json={"v": 1, "query": {"direction": "sideways", "entity": "a", "relation": "b"}},
    )
    assert resp.status_code == 400
    resp = client.post(
        "/sessions",
        json={"v": 1, "query": {"direction": "tail", "entity": "a\tb", "relation": "r"}},
    )
    assert resp.status_code == 400
    assert client.get("/sessions/s9999").status_code == 404


def test_busy_engine_signals_conflict(world, base_engine):
    client, _ = fresh_client(base_engine)
    wq = teaching_query(world, base_engine)
    first = client.post("/sessions", json=query_payload(wq.query)).json()
    assert first["state"]["kind"] in ("need_clue", "need_entity_fact")

    second = client.post("/sessions", json=query_payload(wq.query))
    assert second.status_code == 409

    # posting to a session that is not waiting is also a conflict
    sid = first["session_id"]
    state = first["state"]
    while state["kind"] in ("need_clue", "need_entity_fact"):
        state = client.post(
            f"/sessions/{sid}/facts", json={"v": 1, "triples": []}
        ).json()["state"]
    resp = client.post(f"/sessions/{sid}/facts", json={"v": 1, "triples": []})
    assert resp.status_code == 409


def test_abort_retains_acquired_facts(world, base_engine, tmp_path):
    state_path = str(tmp_path / "state.npz")
    log_path = str(tmp_path / "acquired.tsv")
    client, engine = fresh_client(
        base_engine, state_path=state_path, append_log=log_path, fact_timeout=0.2
    )
    wq = teaching_query(world, base_engine)
    user = SimulatedUser(world.user_kb, np.random.default_rng(5), pending=wq.query)

    resp = client.post("/sessions", json=query_payload(wq.query)).json()
    sid = resp["session_id"]
    state = resp["state"]
    assert state["kind"] == "need_clue"
    offered = user.request_clues(state["relation"], state["max_n"])
    assert offered, "user should hold clue triples for this relation"
    state = client.post(f"/sessions/{sid}/facts", json=triples_payload(offered)).json()[
        "state"
    ]
    assert state["kind"] == "need_entity_fact"

    # never answer; the channel times out and the session aborts
    deadline = time.monotonic() + 5.0
    while time.monotonic() < deadline:
        state = client.get(f"/sessions/{sid}").json()["state"]
        if state["kind"] == "aborted":
            break
        time.sleep(0.05)
    assert state["kind"] == "aborted"

    clue = offered[0]
    assert engine.kb.contains(clue.head, clue.relation, clue.tail)
    logged = [line.split("\t")[:3] for line in open(log_path).read().splitlines()]
    assert [clue.head, clue.relation, clue.tail] in logged
    restored, _ = load_checkpoint(state_path)
    assert restored.kb.contains(clue.head, clue.relation, clue.tail)

    # the engine is free again after the abort
    follow_up = client.post("/sessions", json=query_payload(wq.query))
    assert follow_up.status_code == 200


def test_restart_preserves_taught_facts(world, base_engine, tmp_path):
    state_path = str(tmp_path / "state.npz")
    log_path = str(tmp_path / "acquired.tsv")
    client, engine = fresh_client(
        base_engine, state_path=state_path, append_log=log_path
    )
    wq = teaching_query(world, base_engine)
    user = SimulatedUser(world.user_kb, np.random.default_rng(9), pending=wq.query)
    sid, state = drive_session(client, wq, user)
    assert state["kind"] == "done"

    n_new = engine.kb.n_triples - base_engine.kb.n_triples
    assert n_new > 0
    assert len(open(log_path).read().splitlines()) == n_new

    restored, restored_config = load_checkpoint(state_path)
    assert restored.kb.n_triples == engine.kb.n_triples
    assert restored.sessions_run == engine.sessions_run
    client2 = TestClient(create_app(restored, restored_config))
    stats = client2.get("/kb/stats").json()
    assert stats["n_triples"] == engine.kb.n_triples
