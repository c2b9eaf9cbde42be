"""Simulated world construction and the scripted user that answers from it.

A world is carved out of one original KB.  A set of test relations is
drawn and a fraction of them made unknown: every triple of an unknown
relation leaves the base store.  Per test relation a capped, shuffled
slice of its triples is taken, a fraction of the slice becomes query
triples, and the remainder is divided between the base store (what the
engine starts from) and the user store (what the simulated user can
reveal).  Finally a fraction of the entities mentioned by query triples
is made unknown by moving all their remaining base triples to the user
store.  Query triples themselves appear in neither store; their answer
sets are collected from the original KB before any removal.

The simulated user answers a clue request with triples of the requested
relation and an entity-fact request with triples touching the requested
entity, both drawn uniformly from the user store, never revealing a
triple that would itself complete the pending query.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .decision import Direction, Query
from .kb import KnowledgeBase, Triple, load_kb, save_kb


class WorldBuildError(ValueError):
    """The original KB cannot support the requested carve-up."""


@dataclass
class WorldBuildConfig:
    n_test_relations: int | None = None  # None: every candidate relation
    min_triples_per_relation: int = 0
    unknown_relation_fraction: float = 0.34
    per_relation_cap: int = 250
    test_fraction: float = 0.2
    unknown_entity_fraction: float = 0.45
    known_base_share: float = 0.5
    seed: int = 1000


@dataclass(frozen=True)
class WorldQuery:
    query: Query
    answers: tuple[str, ...]
    e_known: bool
    r_known: bool


@dataclass
class SimWorld:
    base_kb: KnowledgeBase
    user_kb: KnowledgeBase
    queries: list[WorldQuery]
    meta: dict = field(default_factory=dict)


def build_world(
    kb_org: KnowledgeBase, cfg: WorldBuildConfig, rng: np.random.Generator
) -> SimWorld:
    by_relation = {r: kb_org.triples_with_relation(r) for r in kb_org.relation_names()}
    candidates = [
        r for r, trips in by_relation.items() if len(trips) >= cfg.min_triples_per_relation
    ]
    if cfg.n_test_relations is None:
        test_rels = list(candidates)
    else:
        if len(candidates) < cfg.n_test_relations:
            raise WorldBuildError(
                f"only {len(candidates)} relations have >= "
                f"{cfg.min_triples_per_relation} triples, need {cfg.n_test_relations}"
            )
        idx = rng.choice(len(candidates), size=cfg.n_test_relations, replace=False)
        test_rels = [candidates[i] for i in sorted(idx)]
    if not test_rels:
        raise WorldBuildError("no relation qualifies as a test relation")

    order = rng.permutation(len(test_rels))
    n_unknown = int(len(test_rels) * cfg.unknown_relation_fraction)
    unknown_rels = {test_rels[i] for i in order[:n_unknown]}
    test_set = set(test_rels)

    base_list: list[Triple] = []
    user_list: list[Triple] = []
    query_triples: list[Triple] = []

    for rel in kb_org.relation_names():
        trips = by_relation[rel]
        if rel not in test_set:
            base_list.extend(trips)
            continue
        perm = rng.permutation(len(trips))
        shuffled = [trips[i] for i in perm]
        capped = shuffled[: cfg.per_relation_cap]
        leftovers = shuffled[cfg.per_relation_cap :]
        n_test = int(cfg.test_fraction * len(capped))
        query_triples.extend(capped[:n_test])
        remainder = capped[n_test:]
        if rel in unknown_rels:
            # the relation must vanish from the base store entirely
            user_list.extend(remainder)
            user_list.extend(leftovers)
        else:
            n_base = int(round(cfg.known_base_share * len(remainder)))
            base_list.extend(remainder[:n_base])
            user_list.extend(remainder[n_base:])
            base_list.extend(leftovers)

    if not query_triples:
        raise WorldBuildError("carve-up produced zero query triples; KB too small")

    # make a slice of the queried entities unknown: all their remaining
    # base triples move to the user store
    pool: dict[str, None] = {}
    for t in query_triples:
        pool.setdefault(t.head)
        pool.setdefault(t.tail)
    pool_names = list(pool)
    n_move = int(len(pool_names) * cfg.unknown_entity_fraction)
    moved: set[str] = set()
    if n_move:
        idx = rng.choice(len(pool_names), size=n_move, replace=False)
        moved = {pool_names[i] for i in sorted(idx)}
        kept: list[Triple] = []
        for t in base_list:
            if t.head in moved or t.tail in moved:
                user_list.append(t)
            else:
                kept.append(t)
        base_list = kept

    base_kb = KnowledgeBase()
    base_kb.add_all(base_list)
    user_kb = KnowledgeBase()
    user_kb.add_all(user_list)

    queries: list[WorldQuery] = []
    for t in query_triples:
        h = kb_org.entity_id(t.head)
        r = kb_org.relation_id(t.relation)
        tt = kb_org.entity_id(t.tail)
        if rng.integers(2) == 0:
            direction, anchor = Direction.TAIL, t.head
            answers = tuple(kb_org.entity_name(i) for i in kb_org.tail_ids(h, r))
        else:
            direction, anchor = Direction.HEAD, t.tail
            answers = tuple(kb_org.entity_name(i) for i in kb_org.head_ids(r, tt))
        queries.append(
            WorldQuery(
                query=Query(direction=direction, entity=anchor, relation=t.relation),
                answers=answers,
                e_known=base_kb.has_entity(anchor),
                r_known=base_kb.has_relation(t.relation),
            )
        )

    meta = {
        "config": asdict(cfg),
        "n_test_relations": len(test_rels),
        "n_unknown_relations": len(unknown_rels),
        "unknown_relations": sorted(unknown_rels),
        "n_moved_entities": len(moved),
        "base_triples": base_kb.n_triples,
        "user_triples": user_kb.n_triples,
        "n_queries": len(queries),
    }
    return SimWorld(base_kb=base_kb, user_kb=user_kb, queries=queries, meta=meta)


class SimulatedUser:
    """Answers fact requests from the user store, shielding the pending query."""

    def __init__(
        self,
        user_kb: KnowledgeBase,
        rng: np.random.Generator,
        pending: Query | None = None,
    ):
        self.user_kb = user_kb
        self.rng = rng
        self.pending = pending

    def _completes_pending(self, t: Triple) -> bool:
        q = self.pending
        if q is None or t.relation != q.relation:
            return False
        if q.direction is Direction.TAIL:
            return t.head == q.entity
        return t.tail == q.entity

    def _draw(self, cands: list[Triple], max_n: int) -> list[Triple]:
        cands = [t for t in cands if not self._completes_pending(t)]
        if max_n <= 0 or not cands:
            return []
        if len(cands) <= max_n:
            return cands
        idx = self.rng.choice(len(cands), size=max_n, replace=False)
        return [cands[i] for i in sorted(idx)]

    def request_clues(self, relation: str, max_n: int) -> list[Triple]:
        return self._draw(self.user_kb.triples_with_relation(relation), max_n)

    def request_entity_facts(self, entity: str, max_n: int) -> list[Triple]:
        return self._draw(self.user_kb.triples_with_entity(entity), max_n)


# -- world bundle on disk -------------------------------------------------------

_BASE_FILE = "base_kb.tsv"
_USER_FILE = "user_kb.tsv"
_QUERY_FILE = "queries.tsv"
_META_FILE = "world.meta"


def save_world(world: SimWorld, dir_path: str) -> None:
    os.makedirs(dir_path, exist_ok=True)
    save_kb(world.base_kb, os.path.join(dir_path, _BASE_FILE))
    save_kb(world.user_kb, os.path.join(dir_path, _USER_FILE))
    with open(os.path.join(dir_path, _QUERY_FILE), "w", encoding="utf-8") as fh:
        for wq in world.queries:
            for name in wq.answers:
                if "|" in name:
                    raise ValueError(f"entity name {name!r} cannot be serialized (contains '|')")
            fh.write(
                f"{wq.query.direction.value}\t{wq.query.entity}\t{wq.query.relation}\t"
                f"{'|'.join(wq.answers)}\t{int(wq.e_known)}\t{int(wq.r_known)}\n"
            )
    with open(os.path.join(dir_path, _META_FILE), "w", encoding="utf-8") as fh:
        json.dump(world.meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_world(dir_path: str) -> SimWorld:
    base_kb = load_kb(os.path.join(dir_path, _BASE_FILE))
    user_kb = load_kb(os.path.join(dir_path, _USER_FILE))
    queries: list[WorldQuery] = []
    qpath = os.path.join(dir_path, _QUERY_FILE)
    with open(qpath, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ValueError(f"{qpath}:{line_no}: expected 6 fields, got {len(parts)}")
            direction, entity, relation, answers, e_known, r_known = parts
            queries.append(
                WorldQuery(
                    query=Query(Direction(direction), entity, relation),
                    answers=tuple(answers.split("|")) if answers else (),
                    e_known=bool(int(e_known)),
                    r_known=bool(int(r_known)),
                )
            )
    with open(os.path.join(dir_path, _META_FILE), encoding="utf-8") as fh:
        meta = json.load(fh)
    return SimWorld(base_kb=base_kb, user_kb=user_kb, queries=queries, meta=meta)
