"""Answer/reject decisions and the two confidence-tracking buffers.

A query fixes one entity and a relation and asks for the missing slot;
the model ranks every registered entity for that slot.  Whether the top
candidate is trusted is decided by comparing its score against a query
threshold assembled from per-symbol calibration values.

The threshold buffer stores, per entity and per relation, the midpoint
between mean scores of true answers and mean scores of sampled
non-answers over recent validation tuples.  A query threshold composes
the values of the symbols it references; a composition that references
a symbol with no stored value falls back to zero, i.e. a variant only
becomes selective once every symbol it depends on has been validated.
Whatever the composition, the threshold is clamped at zero and the
verdict requires the top score to exceed it strictly.

The performance buffer keeps a running mean of reciprocal ranks per
symbol; the weakest fraction of each kind forms the diffident sets that
drive the engine's decision to ask the user for more facts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .kb import KnowledgeBase
from .model import EmbeddingModel


class Direction(str, enum.Enum):
    TAIL = "tail"  # (e, r, ?)
    HEAD = "head"  # (?, r, e)


@dataclass(frozen=True)
class Query:
    """One slot-filling question; entity is the known slot."""

    direction: Direction
    entity: str
    relation: str


class Verdict(str, enum.Enum):
    ANSWER = "answer"
    REJECT = "reject"
    UNANSWERABLE = "unanswerable"


class ThresholdVariant(str, enum.Enum):
    ENT = "ent"
    REL = "rel"
    MIN = "min"
    MAX = "max"


@dataclass(frozen=True)
class ValidationTuple:
    """A held-out query with its true answers and sampled non-answers."""

    direction: Direction
    entity: str
    relation: str
    entity_id: int
    relation_id: int
    pos_ids: np.ndarray
    neg_ids: np.ndarray


@dataclass
class PerfEntry:
    mean: float = 0.0
    count: int = 0

    def fold(self, observation: float) -> None:
        self.mean = (self.mean * self.count + observation) / (self.count + 1)
        self.count += 1


@dataclass
class ThresholdEntry:
    value: float
    count: int


@dataclass
class PerformanceBuffer:
    """Running mean reciprocal rank per symbol."""

    entities: dict[str, PerfEntry] = field(default_factory=dict)
    relations: dict[str, PerfEntry] = field(default_factory=dict)

    def observe_entity(self, name: str, rr: float) -> None:
        self.entities.setdefault(name, PerfEntry()).fold(rr)

    def observe_relation(self, name: str, rr: float) -> None:
        self.relations.setdefault(name, PerfEntry()).fold(rr)


@dataclass
class ThresholdBuffer:
    """Latest calibration value per symbol (overwritten, not averaged)."""

    entities: dict[str, ThresholdEntry] = field(default_factory=dict)
    relations: dict[str, ThresholdEntry] = field(default_factory=dict)


@dataclass(frozen=True)
class DiffidentSets:
    entities: frozenset[str] = frozenset()
    relations: frozenset[str] = frozenset()


@dataclass
class Decision:
    verdict: Verdict
    answer: str | None = None
    threshold: float = 0.0
    top_score: float | None = None
    ranking: np.ndarray | None = None  # entity ids, best first
    scores: np.ndarray | None = None  # aligned with entity ids


def query_scores(model: EmbeddingModel, entity_id: int, relation_id: int, direction: Direction) -> np.ndarray:
    if direction is Direction.TAIL:
        return model.score_all_tails(entity_id, relation_id)
    return model.score_all_heads(relation_id, entity_id)


def compute_threshold(model: EmbeddingModel, tuples: list[ValidationTuple]) -> float | None:
    """Midpoint calibration over a group of validation tuples.

    Averages, across tuples, the mean true-answer score plus the mean
    non-answer score, and halves the result.  Tuples without non-answers
    (every entity is an answer) carry no contrast and are skipped; None
    means nothing usable was given.
    """
    scores = [query_scores(model, tp.entity_id, tp.relation_id, tp.direction) for tp in tuples]
    return _threshold_from_scores(tuples, scores)


def _threshold_from_scores(
    tuples: list[ValidationTuple], scores: list[np.ndarray]
) -> float | None:
    acc = 0.0
    used = 0
    for tp, vec in zip(tuples, scores):
        if len(tp.neg_ids) == 0:
            continue
        acc += float(vec[tp.pos_ids].mean()) + float(vec[tp.neg_ids].mean())
        used += 1
    if used == 0:
        return None
    return acc / (2.0 * used)


def prediction_threshold(
    buffer: ThresholdBuffer,
    entity: str,
    relation: str,
    variant: ThresholdVariant,
) -> float:
    """Compose the query threshold; never negative.

    A variant is inert (returns 0) until every symbol it references has
    a stored value: the entity variant needs the entity, the relation
    variant needs the relation, and the min/max variants need both.
    """
    te = buffer.entities.get(entity)
    tr = buffer.relations.get(relation)
    if variant is ThresholdVariant.ENT:
        return max(te.value, 0.0) if te is not None else 0.0
    if variant is ThresholdVariant.REL:
        return max(tr.value, 0.0) if tr is not None else 0.0
    if te is None or tr is None:
        return 0.0
    if variant is ThresholdVariant.MIN:
        return max(min(te.value, tr.value), 0.0)
    return max(te.value, tr.value, 0.0)


def rank_of_best(scores: np.ndarray, candidate_ids: np.ndarray) -> int:
    """1-based rank of the best-scoring candidate under (score desc, id asc)."""
    s = scores[candidate_ids]
    s_max = s.max()
    best_id = int(candidate_ids[s == s_max].min())
    higher = int((scores > s_max).sum())
    eq_lower = int((scores[:best_id] == s_max).sum())
    return 1 + higher + eq_lower


def decide(
    model: EmbeddingModel,
    kb: KnowledgeBase,
    query: Query,
    threshold: float,
) -> Decision:
    """Rank every entity for the open slot and apply the threshold.

    The ranking orders by score descending with ties broken by lower
    entity id; the top candidate is answered only when its score exceeds
    the threshold strictly.  A query whose entity or relation is not
    registered is unanswerable (there is nothing to rank against).
    """
    if not kb.has_entity(query.entity) or not kb.has_relation(query.relation):
        return Decision(verdict=Verdict.UNANSWERABLE, threshold=threshold)
    eid = kb.entity_id(query.entity)
    rid = kb.relation_id(query.relation)
    scores = query_scores(model, eid, rid, query.direction)
    ranking = np.argsort(-scores, kind="stable")
    top = int(ranking[0])
    top_score = float(scores[top])
    if top_score > threshold:
        return Decision(
            verdict=Verdict.ANSWER,
            answer=kb.entity_name(top),
            threshold=threshold,
            top_score=top_score,
            ranking=ranking,
            scores=scores,
        )
    return Decision(
        verdict=Verdict.REJECT,
        threshold=threshold,
        top_score=top_score,
        ranking=ranking,
        scores=scores,
    )


@dataclass
class BufferUpdateSummary:
    n_tuples: int = 0
    mean_rr: float = 0.0
    entity_keys: int = 0
    relation_keys: int = 0


def update_buffers(
    model: EmbeddingModel,
    tuples: list[ValidationTuple],
    perf: PerformanceBuffer,
    thresholds: ThresholdBuffer,
) -> BufferUpdateSummary:
    """Fold reciprocal ranks into the performance buffer and refresh thresholds.

    Every tuple contributes one reciprocal-rank observation to the
    entity and the relation its query mentions; the threshold of each
    mentioned symbol is recomputed from this batch's tuples alone.
    """
    if not tuples:
        return BufferUpdateSummary()
    scores = [query_scores(model, tp.entity_id, tp.relation_id, tp.direction) for tp in tuples]
    by_entity: dict[str, list[int]] = {}
    by_relation: dict[str, list[int]] = {}
    rr_total = 0.0
    for i, tp in enumerate(tuples):
        rr = 1.0 / rank_of_best(scores[i], tp.pos_ids)
        rr_total += rr
        perf.observe_entity(tp.entity, rr)
        perf.observe_relation(tp.relation, rr)
        by_entity.setdefault(tp.entity, []).append(i)
        by_relation.setdefault(tp.relation, []).append(i)
    for name, idx in by_entity.items():
        value = _threshold_from_scores([tuples[i] for i in idx], [scores[i] for i in idx])
        if value is not None:
            thresholds.entities[name] = ThresholdEntry(value, len(idx))
    for name, idx in by_relation.items():
        value = _threshold_from_scores([tuples[i] for i in idx], [scores[i] for i in idx])
        if value is not None:
            thresholds.relations[name] = ThresholdEntry(value, len(idx))
    return BufferUpdateSummary(
        n_tuples=len(tuples),
        mean_rr=rr_total / len(tuples),
        entity_keys=len(by_entity),
        relation_keys=len(by_relation),
    )


def diffident_sets(perf: PerformanceBuffer, rho: float) -> DiffidentSets:
    """Bottom ceil(rho% of n) symbols of each kind by mean reciprocal rank.

    Ties break toward the lexicographically earlier name so the sets are
    reproducible; rho = 0 yields empty sets.
    """
    if not 0.0 <= rho <= 100.0:
        raise ValueError(f"rho must lie in [0, 100], got {rho}")

    def bottom(entries: dict[str, PerfEntry]) -> frozenset[str]:
        n = len(entries)
        k = math.ceil(rho * n / 100.0)
        if k == 0:
            return frozenset()
        ordered = sorted(entries.items(), key=lambda kv: (kv[1].mean, kv[0]))
        return frozenset(name for name, _ in ordered[:k])

    return DiffidentSets(entities=bottom(perf.entities), relations=bottom(perf.relations))


# -- buffer TSV round trip ----------------------------------------------------


def save_buffers_tsv(
    path: str,
    perf_or_thr: PerformanceBuffer | ThresholdBuffer,
) -> None:
    """Write ``kind<TAB>name<TAB>value<TAB>count`` rows, sorted."""
    rows: list[tuple[str, str, float, int]] = []
    if isinstance(perf_or_thr, PerformanceBuffer):
        for name, e in perf_or_thr.entities.items():
            rows.append(("entity", name, e.mean, e.count))
        for name, e in perf_or_thr.relations.items():
            rows.append(("relation", name, e.mean, e.count))
    else:
        for name, e in perf_or_thr.entities.items():
            rows.append(("entity", name, e.value, e.count))
        for name, e in perf_or_thr.relations.items():
            rows.append(("relation", name, e.value, e.count))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8") as fh:
        for kind, name, value, count in rows:
            fh.write(f"{kind}\t{name}\t{value!r}\t{count}\n")


def load_performance_tsv(path: str) -> PerformanceBuffer:
    buf = PerformanceBuffer()
    for kind, name, value, count in _read_buffer_rows(path):
        target = buf.entities if kind == "entity" else buf.relations
        target[name] = PerfEntry(mean=value, count=count)
    return buf


def load_threshold_tsv(path: str) -> ThresholdBuffer:
    buf = ThresholdBuffer()
    for kind, name, value, count in _read_buffer_rows(path):
        target = buf.entities if kind == "entity" else buf.relations
        target[name] = ThresholdEntry(value=value, count=count)
    return buf


def _read_buffer_rows(path: str):
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[0] not in ("entity", "relation"):
                raise ValueError(f"{path}:{line_no}: bad buffer row {line!r}")
            yield parts[0], parts[1], float(parts[2]), int(parts[3])
