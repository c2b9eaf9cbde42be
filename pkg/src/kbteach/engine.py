"""One-query learning sessions over a growing KB.

A session takes a query, optionally asks the user for supporting facts,
folds whatever was provided into the KB and the embedding tables,
fine-tunes on a sample of triples around the query's symbols, refreshes
the calibration buffers from a held-out sample, and finally answers or
rejects.  The engine asks about a symbol when it is unregistered or
currently sits in the diffident (weakest-performing) set; how much it
may ask is budgeted per session.  Asking decisions are made against the
state at session start, and acquired facts are retained even when the
session ends unanswerable or aborts mid-way.

Every random choice draws from the engine's own generator, so a given
initial state, query stream, and user behavior replays identically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .decision import (
    Decision,
    DiffidentSets,
    Direction,
    PerformanceBuffer,
    Query,
    ThresholdBuffer,
    ThresholdVariant,
    ValidationTuple,
    Verdict,
    decide,
    diffident_sets,
    prediction_threshold,
    update_buffers,
)
from .kb import AddOutcome, KnowledgeBase, Split, Triple
from .model import EmbeddingModel, ModelHyper, train


class SamplingStrategy(str, enum.Enum):
    """Which neighborhood the per-session train/valid samples come from."""

    BOTH = "both"
    ENTITY = "entity"
    RELATION = "relation"


@dataclass
class SessionConfig:
    alpha: float = 0.9
    rho: float = 20.0
    max_train_sample: int = 500
    valid_sample: int = 50
    valid_negatives_per_positive: int = 4
    max_clues: int = 1
    max_entity_facts: int = 3
    epochs_closed: int = 5
    epochs_open: int = 2
    threshold_variant: ThresholdVariant = ThresholdVariant.MAX
    sampling: SamplingStrategy = SamplingStrategy.BOTH
    use_performance_buffer: bool = True


class UserChannel(Protocol):
    """Source of supporting facts; replies may be empty."""

    def request_clues(self, relation: str, max_n: int) -> list[Triple]: ...

    def request_entity_facts(self, entity: str, max_n: int) -> list[Triple]: ...


class ChannelError(RuntimeError):
    """The user channel failed mid-session; already-inserted facts remain."""


@dataclass
class SessionOutcome:
    query: Query
    verdict: Verdict
    answer: str | None
    threshold: float
    top_score: float | None
    open_world: bool
    asked_clue: bool
    asked_fact: bool
    accepted_clues: int
    accepted_facts: int
    transcript: list[dict]
    decision: Decision | None = field(default=None, repr=False)


def _split_cap(n_first: int, n_second: int, cap: int) -> tuple[int, int]:
    """Budget cap across two candidate pools, spilling unused capacity."""
    take_first = min(n_first, cap - min(n_second, cap // 2))
    take_second = min(n_second, cap - take_first)
    return take_first, take_second


class Engine:
    def __init__(
        self,
        kb: KnowledgeBase,
        model: EmbeddingModel,
        perf: PerformanceBuffer,
        thresholds: ThresholdBuffer,
        diffident: DiffidentSets,
        config: SessionConfig,
        rng: np.random.Generator,
    ):
        self.kb = kb
        self.model = model
        self.perf = perf
        self.thresholds = thresholds
        self.diffident = diffident
        self.config = config
        self.rng = rng
        self.sessions_run = 0

    # -- asking policy --------------------------------------------------------

    def should_ask_relation(self, relation: str) -> bool:
        if not self.kb.has_relation(relation):
            return True
        return self.config.use_performance_buffer and relation in self.diffident.relations

    def should_ask_entity(self, entity: str) -> bool:
        if not self.kb.has_entity(entity):
            return True
        return self.config.use_performance_buffer and entity in self.diffident.entities

    # -- fact intake -----------------------------------------------------------

    def _insert_facts(self, offered: Sequence[Triple], cap: int) -> tuple[int, int, list[Triple]]:
        """Accept up to cap facts, marking each train/valid by an alpha draw."""
        accepted = 0
        duplicates = 0
        stored: list[Triple] = []
        for raw in list(offered)[:cap]:
            split = Split.TRAIN if self.rng.random() < self.config.alpha else Split.VALID
            fact = Triple(raw.head, raw.relation, raw.tail, split)
            outcome = self.kb.add(fact)
            accepted += 1
            if outcome is AddOutcome.DUPLICATE:
                duplicates += 1
            else:
                stored.append(fact)
        return accepted, duplicates, stored

    # -- per-session sampling ---------------------------------------------------

    def _sample_sides(self, query: Query, split: Split, cap: int) -> list[Triple]:
        """Sample around the query's relation and entity under one cap.

        The relation side and entity side each get half the budget, with
        leftover capacity spilling to the side that has more candidates;
        overlapping triples are not double-taken.
        """
        strategy = self.config.sampling
        r_cands: list[Triple] = []
        e_cands: list[Triple] = []
        if strategy in (SamplingStrategy.BOTH, SamplingStrategy.RELATION):
            r_cands = self.kb.triples_involving(query.relation, split)
        if strategy in (SamplingStrategy.BOTH, SamplingStrategy.ENTITY):
            e_cands = self.kb.triples_involving(query.entity, split)
        take_r, take_e = _split_cap(len(r_cands), len(e_cands), cap)
        chosen: dict[tuple[str, str, str], Triple] = {}
        if take_r:
            idx = self.rng.choice(len(r_cands), size=take_r, replace=False)
            for i in sorted(idx):
                chosen[r_cands[i].key()] = r_cands[i]
        if e_cands:
            remaining = [t for t in e_cands if t.key() not in chosen]
            take_e = min(take_e, len(remaining), cap - len(chosen))
            if take_e > 0:
                idx = self.rng.choice(len(remaining), size=take_e, replace=False)
                for i in sorted(idx):
                    chosen[remaining[i].key()] = remaining[i]
        return list(chosen.values())

    def build_datasets(self, query: Query) -> tuple[list[Triple], list[ValidationTuple]]:
        """Train sample plus validation tuples for this session's symbols."""
        train_triples = self._sample_sides(query, Split.TRAIN, self.config.max_train_sample)
        valid_triples = self._sample_sides(query, Split.VALID, self.config.valid_sample)
        return train_triples, self.tuples_from_triples(valid_triples)

    def tuples_from_triples(self, triples: Sequence[Triple]) -> list[ValidationTuple]:
        """Turn held-out triples into ranking tuples with sampled non-answers."""
        out: list[ValidationTuple] = []
        n_entities = self.kb.n_entities
        all_ids = np.arange(n_entities)
        for t in triples:
            h = self.kb.entity_id(t.head)
            r = self.kb.relation_id(t.relation)
            tt = self.kb.entity_id(t.tail)
            if self.rng.integers(2) == 0:
                direction, anchor_name, anchor = Direction.TAIL, t.head, h
                pos = self.kb.tail_ids(h, r)
            else:
                direction, anchor_name, anchor = Direction.HEAD, t.tail, tt
                pos = self.kb.head_ids(r, tt)
            pos_ids = np.array(pos, dtype=np.intp)
            mask = np.ones(n_entities, dtype=bool)
            mask[pos_ids] = False
            pool = all_ids[mask]
            k = min(self.config.valid_negatives_per_positive * len(pos_ids), len(pool))
            neg_ids = (
                np.sort(self.rng.choice(pool, size=k, replace=False))
                if k > 0
                else np.zeros(0, dtype=np.intp)
            )
            out.append(
                ValidationTuple(
                    direction=direction,
                    entity=anchor_name,
                    relation=t.relation,
                    entity_id=anchor,
                    relation_id=r,
                    pos_ids=pos_ids,
                    neg_ids=neg_ids,
                )
            )
        return out

    # -- the session -------------------------------------------------------------

    def process_query(self, query: Query, user: UserChannel) -> SessionOutcome:
        cfg = self.config
        e_known = self.kb.has_entity(query.entity)
        r_known = self.kb.has_relation(query.relation)
        open_world = not (e_known and r_known)
        transcript: list[dict] = [
            {
                "event": "query",
                "direction": query.direction.value,
                "entity": query.entity,
                "relation": query.relation,
                "entity_known": e_known,
                "relation_known": r_known,
            }
        ]

        # asking decisions are fixed against the state at session start
        ask_r = self.should_ask_relation(query.relation)
        ask_e = self.should_ask_entity(query.entity)

        accepted_clues = 0
        if ask_r:
            transcript.append(
                {"event": "clue_request", "relation": query.relation, "max_n": cfg.max_clues}
            )
            clues = user.request_clues(query.relation, cfg.max_clues)
            accepted_clues, dups, _ = self._insert_facts(clues, cfg.max_clues)
            transcript.append(
                {
                    "event": "clues",
                    "offered": len(clues),
                    "accepted": accepted_clues,
                    "duplicates": dups,
                    "triples": [[t.head, t.relation, t.tail] for t in clues[: cfg.max_clues]],
                }
            )

        accepted_facts = 0
        if ask_e:
            transcript.append(
                {"event": "fact_request", "entity": query.entity, "max_n": cfg.max_entity_facts}
            )
            facts = user.request_entity_facts(query.entity, cfg.max_entity_facts)
            accepted_facts, dups, _ = self._insert_facts(facts, cfg.max_entity_facts)
            transcript.append(
                {
                    "event": "facts",
                    "offered": len(facts),
                    "accepted": accepted_facts,
                    "duplicates": dups,
                    "triples": [
                        [t.head, t.relation, t.tail] for t in facts[: cfg.max_entity_facts]
                    ],
                }
            )

        self.model.sync_with(self.kb, self.rng)

        decision: Decision | None = None
        if not self.kb.has_entity(query.entity) or not self.kb.has_relation(query.relation):
            # nothing to rank against; no training happens on this query
            verdict = Verdict.UNANSWERABLE
            answer = None
            threshold = 0.0
            top_score = None
            transcript.append({"event": "verdict", "verdict": verdict.value})
        else:
            train_triples, tuples = self.build_datasets(query)
            if train_triples:
                epochs = cfg.epochs_open if open_world else cfg.epochs_closed
                summary = train(
                    self.model,
                    self.kb,
                    train_triples,
                    epochs,
                    self.model.hyper.batch_size,
                    self.rng,
                )
                transcript.append(
                    {
                        "event": "training",
                        "epochs": summary.epochs,
                        "n_triples": summary.n_triples,
                        "batches": summary.batches,
                        "mean_loss": summary.final_loss,
                        "mean_hinge": summary.final_hinge,
                        "negative_shortfalls": summary.negative_shortfalls,
                    }
                )
            if tuples:
                vsum = update_buffers(self.model, tuples, self.perf, self.thresholds)
                transcript.append(
                    {"event": "validation", "n_tuples": vsum.n_tuples, "mean_rr": vsum.mean_rr}
                )
            threshold = prediction_threshold(
                self.thresholds, query.entity, query.relation, cfg.threshold_variant
            )
            decision = decide(self.model, self.kb, query, threshold)
            verdict = decision.verdict
            answer = decision.answer
            top_score = decision.top_score
            top10 = []
            if decision.ranking is not None:
                for eid in decision.ranking[:10]:
                    top10.append([self.kb.entity_name(int(eid)), float(decision.scores[int(eid)])])
            transcript.append(
                {
                    "event": "verdict",
                    "verdict": verdict.value,
                    "answer": answer,
                    "threshold": threshold,
                    "top_score": top_score,
                    "top": top10,
                }
            )

        # the refreshed diffident sets steer the next session's asking
        self.diffident = diffident_sets(self.perf, cfg.rho)
        self.sessions_run += 1
        return SessionOutcome(
            query=query,
            verdict=verdict,
            answer=answer,
            threshold=threshold,
            top_score=top_score,
            open_world=open_world,
            asked_clue=ask_r,
            asked_fact=ask_e,
            accepted_clues=accepted_clues,
            accepted_facts=accepted_facts,
            transcript=transcript,
            decision=decision,
        )


def initial_training(
    kb: KnowledgeBase,
    hyper: ModelHyper,
    session_config: SessionConfig,
    init_epochs: int,
    rng: np.random.Generator,
) -> Engine:
    """Build an engine from a base KB: split, train, calibrate.

    The base triples are re-marked with an exact alpha train/valid split,
    the model trains on the train marks, and both buffers are populated
    from ranking tuples built over the whole validation mark set.  The
    generator becomes the engine's own stream.
    """
    kb.mark_random_split(session_config.alpha, rng)
    model = EmbeddingModel(hyper, kb.n_entities, kb.n_relations, rng)
    engine = Engine(
        kb=kb,
        model=model,
        perf=PerformanceBuffer(),
        thresholds=ThresholdBuffer(),
        diffident=DiffidentSets(),
        config=session_config,
        rng=rng,
    )
    train_marked = [t for t in kb.triples() if t.split is Split.TRAIN]
    if train_marked and init_epochs > 0:
        train(model, kb, train_marked, init_epochs, hyper.batch_size, rng)
    valid_marked = [t for t in kb.triples() if t.split is Split.VALID]
    if valid_marked:
        tuples = engine.tuples_from_triples(valid_marked)
        update_buffers(model, tuples, engine.perf, engine.thresholds)
    engine.diffident = diffident_sets(engine.perf, session_config.rho)
    return engine
