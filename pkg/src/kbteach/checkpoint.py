"""Self-describing, byte-deterministic engine checkpoints.

A checkpoint is one file: a magic string, an 8-byte big-endian length,
a sorted-keys JSON header, then the raw C-order bytes of each array in
header order.  The header carries a format version, the engine config,
the symbol registries, both buffers, the generator state, and the
dtype/shape/offset of every array.  Unlike zip-based containers this
layout embeds no timestamps, so identical state serializes to identical
bytes — which the evaluation pipeline's reproducibility checks rely on.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .config import EngineConfig
from .decision import (
    DiffidentSets,
    PerfEntry,
    PerformanceBuffer,
    ThresholdBuffer,
    ThresholdEntry,
    diffident_sets,
)
from .engine import Engine
from .kb import KnowledgeBase, Split, Triple
from .model import EmbeddingModel

_MAGIC = b"KBTEACH-CKPT\n"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _perf_to_json(buf: PerformanceBuffer) -> dict:
    return {
        "entities": {k: [v.mean, v.count] for k, v in buf.entities.items()},
        "relations": {k: [v.mean, v.count] for k, v in buf.relations.items()},
    }


def _thr_to_json(buf: ThresholdBuffer) -> dict:
    return {
        "entities": {k: [v.value, v.count] for k, v in buf.entities.items()},
        "relations": {k: [v.value, v.count] for k, v in buf.relations.items()},
    }


def save_checkpoint(engine: Engine, config: EngineConfig, path: str) -> None:
    kb = engine.kb
    model = engine.model
    triples = np.array(
        [
            (kb.entity_id(t.head), kb.relation_id(t.relation), kb.entity_id(t.tail))
            for t in kb.triples()
        ],
        dtype=np.int64,
    ).reshape(-1, 3)
    splits = np.array(
        [1 if t.split is Split.VALID else 0 for t in kb.triples()], dtype=np.uint8
    )
    arrays = {
        "entities": model.entities,
        "relations": model.relations,
        "m_ent": model._m_ent,
        "v_ent": model._v_ent,
        "m_rel": model._m_rel,
        "v_rel": model._v_rel,
        "kb_triples": triples,
        "kb_splits": splits,
    }
    specs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        arrays[name] = arr
        specs.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "offset": offset}
        )
        offset += arr.nbytes
    header = {
        "version": _VERSION,
        "config": config.to_dict(),
        "entity_names": kb.entity_names(),
        "relation_names": kb.relation_names(),
        "performance": _perf_to_json(engine.perf),
        "thresholds": _thr_to_json(engine.thresholds),
        "rng_state": engine.rng.bit_generator.state,
        "adam_step": engine.model.step,
        "sessions_run": engine.sessions_run,
        "arrays": specs,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack(">Q", len(blob)))
        fh.write(blob)
        for spec in specs:
            fh.write(arrays[spec["name"]].tobytes())


def load_checkpoint(path: str) -> tuple[Engine, EngineConfig]:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_MAGIC))
            if magic != _MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            (blob_len,) = struct.unpack(">Q", fh.read(8))
            header = json.loads(fh.read(blob_len).decode("utf-8"))
            if header.get("version") != _VERSION:
                raise CheckpointError(
                    f"{path}: unsupported checkpoint version {header.get('version')}"
                )
            payload = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"])
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = spec["offset"]
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=start).reshape(shape)
        arrays[spec["name"]] = arr.copy()

    config = EngineConfig.from_dict(header["config"])
    kb = KnowledgeBase()
    entity_names = header["entity_names"]
    relation_names = header["relation_names"]
    for name in entity_names:
        kb._intern_entity(name)
    for name in relation_names:
        kb._intern_relation(name)
    for (h, r, t), s in zip(arrays["kb_triples"], arrays["kb_splits"]):
        kb.add(
            Triple(
                entity_names[int(h)],
                relation_names[int(r)],
                entity_names[int(t)],
                Split.VALID if s else Split.TRAIN,
            )
        )

    model = EmbeddingModel.__new__(EmbeddingModel)
    model.hyper = config.model_hyper()
    model.entities = arrays["entities"]
    model.relations = arrays["relations"]
    model._m_ent = arrays["m_ent"]
    model._v_ent = arrays["v_ent"]
    model._m_rel = arrays["m_rel"]
    model._v_rel = arrays["v_rel"]
    model.step = int(header["adam_step"])
    if model.entities.shape[0] != kb.n_entities or model.relations.shape[0] != kb.n_relations:
        raise CheckpointError(f"{path}: table rows disagree with registries")

    perf = PerformanceBuffer(
        entities={k: PerfEntry(v[0], int(v[1])) for k, v in header["performance"]["entities"].items()},
        relations={k: PerfEntry(v[0], int(v[1])) for k, v in header["performance"]["relations"].items()},
    )
    thresholds = ThresholdBuffer(
        entities={k: ThresholdEntry(v[0], int(v[1])) for k, v in header["thresholds"]["entities"].items()},
        relations={k: ThresholdEntry(v[0], int(v[1])) for k, v in header["thresholds"]["relations"].items()},
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    engine = Engine(
        kb=kb,
        model=model,
        perf=perf,
        thresholds=thresholds,
        diffident=DiffidentSets(),
        config=config.session_config(),
        rng=rng,
    )
    engine.diffident = diffident_sets(perf, config.rho)
    engine.sessions_run = int(header["sessions_run"])
    return engine, config
