import copy

import numpy as np
import pytest

from kbteach.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kbteach.config import EngineConfig
from kbteach.decision import Direction, Query
from kbteach.engine import initial_training
from kbteach.kb import KnowledgeBase, Triple


class SilentUser:
    def request_clues(self, relation, max_n):
        return []

    def request_entity_facts(self, entity, max_n):
        return []


def fresh_engine(seed=5):
    config = EngineConfig(dim=8, learning_rate=0.05, init_epochs=5, seed=seed)
    kb = KnowledgeBase()
    for i in range(25):
        kb.add(Triple(f"e{i}", "next", f"e{(i + 1) % 25}"))
        kb.add(Triple(f"e{i}", "skip", f"e{(i + 2) % 25}"))
    engine = initial_training(
        kb,
        config.model_hyper(),
        config.session_config(),
        config.init_epochs,
        np.random.default_rng(config.seed),
    )
    return engine, config


def test_round_trip_restores_everything(tmp_path):
    engine, config = fresh_engine()
    engine.process_query(Query(Direction.TAIL, "e0", "next"), SilentUser())
    path = tmp_path / "state.ckpt"
    save_checkpoint(engine, config, str(path))
    back, back_config = load_checkpoint(str(path))

    assert back_config.to_dict() == config.to_dict()
    np.testing.assert_array_equal(back.model.entities, engine.model.entities)
    np.testing.assert_array_equal(back.model.relations, engine.model.relations)
    np.testing.assert_array_equal(back.model._m_ent, engine.model._m_ent)
    np.testing.assert_array_equal(back.model._v_rel, engine.model._v_rel)
    assert back.model.step == engine.model.step
    assert back.sessions_run == engine.sessions_run
    assert back.kb.entity_names() == engine.kb.entity_names()
    assert back.kb.relation_names() == engine.kb.relation_names()
    assert [t.key() for t in back.kb.triples()] == [t.key() for t in engine.kb.triples()]
    assert [t.split for t in back.kb.triples()] == [t.split for t in engine.kb.triples()]
    assert back.perf.entities == engine.perf.entities
    assert back.perf.relations == engine.perf.relations
    assert back.thresholds.entities == engine.thresholds.entities
    assert back.diffident == engine.diffident
    assert back.rng.bit_generator.state == engine.rng.bit_generator.state


def test_identical_state_saves_identical_bytes(tmp_path):
    engine, config = fresh_engine()
    p1, p2, p3 = (tmp_path / n for n in ("a.ckpt", "b.ckpt", "c.ckpt"))
    save_checkpoint(engine, config, str(p1))
    save_checkpoint(engine, config, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    back, back_config = load_checkpoint(str(p1))
    save_checkpoint(back, back_config, str(p3))
    assert p1.read_bytes() == p3.read_bytes()


def test_resumed_engine_replays_sessions_exactly(tmp_path):
    engine, config = fresh_engine(seed=9)
    path = tmp_path / "state.ckpt"
    save_checkpoint(engine, config, str(path))
    resumed, _ = load_checkpoint(str(path))

    queries = [
        Query(Direction.TAIL, "e3", "next"),
        Query(Direction.HEAD, "e7", "skip"),
    ]
    outs_a = [engine.process_query(q, SilentUser()) for q in queries]
    outs_b = [resumed.process_query(q, SilentUser()) for q in queries]
    assert [o.transcript for o in outs_a] == [o.transcript for o in outs_b]
    np.testing.assert_array_equal(engine.model.entities, resumed.model.entities)


def test_rejects_foreign_and_truncated_files(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "missing.ckpt"))

    engine, config = fresh_engine()
    good = tmp_path / "good.ckpt"
    save_checkpoint(engine, config, str(good))
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(good.read_bytes()[:60])
    with pytest.raises((CheckpointError, ValueError)):
        load_checkpoint(str(clipped))


def test_grown_engine_round_trips(tmp_path):
    engine, config = fresh_engine()
    engine.kb.add(Triple("newcomer", "fresh", "e0"))
    engine.model.sync_with(engine.kb, engine.rng)
    path = tmp_path / "grown.ckpt"
    save_checkpoint(engine, config, str(path))
    back, _ = load_checkpoint(str(path))
    assert back.kb.has_entity("newcomer") and back.kb.has_relation("fresh")
    assert back.model.n_entities == engine.model.n_entities
    np.testing.assert_array_equal(back.model.entities, engine.model.entities)
