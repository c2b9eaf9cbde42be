"""Stream evaluation: run sessions over a world's queries and score them.

Scoring conventions, applied uniformly:

* A query's rank is that of its best-ranked true answer among all
  registered entities, computable only when some true answer entity is
  registered at decision time (the AE condition) and the session
  produced a ranking.
* Mean reciprocal rank averages 1/rank over queries with a rank; it
  measures ranking quality independent of the answer/reject verdict.
  Queries without a computable rank (no true answer registered, or the
  session was unanswerable) are excluded.
* Hits@k respects the verdict: an answered query is a hit when its rank
  is within k; a rejected query is a hit exactly when no true answer
  entity was registered (a correct rejection).  Everything else,
  unanswerable sessions included, is a miss.  Reported as percentages.
* Over-time slices follow answered queries only: at each stream prefix
  they report ranking quality given that the engine chose to answer.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .decision import ThresholdVariant, Verdict, rank_of_best
from .engine import ChannelError, Engine, SamplingStrategy, SessionConfig, initial_training
from .kb import KnowledgeBase
from .model import ModelHyper
from .simulate import SimWorld, SimulatedUser, WorldQuery


@dataclass
class QueryLogRecord:
    idx: int
    direction: str
    entity: str
    relation: str
    e_known: bool
    r_known: bool
    asked_clue: bool
    asked_fact: bool
    verdict: str
    rank: int | None
    ae: bool

    @property
    def open_world(self) -> bool:
        return not (self.e_known and self.r_known)


def mrr(ranks: Sequence[int | None]) -> float | None:
    """Mean of 1/rank over present entries; None when nothing is rankable."""
    present = [r for r in ranks if r is not None]
    if not present:
        return None
    for r in present:
        if r < 1:
            raise ValueError(f"ranks are 1-based, got {r}")
    return sum(1.0 / r for r in present) / len(present)


def _is_hit(rec: QueryLogRecord, k: int) -> bool:
    if rec.verdict == Verdict.ANSWER.value:
        return rec.rank is not None and rec.rank <= k
    if rec.verdict == Verdict.REJECT.value:
        return not rec.ae
    return False


def hits_at_k(records: Sequence[QueryLogRecord], k: int) -> float | None:
    """Percentage of queries answered correctly within k or correctly rejected."""
    if not records:
        return None
    return 100.0 * sum(1 for r in records if _is_hit(r, k)) / len(records)


def rejection_stats(records: Sequence[QueryLogRecord]) -> dict:
    """Conditional verdict rates given whether a true answer was registered."""
    ae = [r for r in records if r.ae]
    not_ae = [r for r in records if not r.ae]
    pred_given_ae = (
        sum(1 for r in ae if r.verdict == Verdict.ANSWER.value) / len(ae) if ae else None
    )
    reject_given_not_ae = (
        sum(1 for r in not_ae if r.verdict == Verdict.REJECT.value) / len(not_ae)
        if not_ae
        else None
    )
    return {
        "n_answer_exists": len(ae),
        "n_no_answer": len(not_ae),
        "pr_predict_given_answer_exists": pred_given_ae,
        "pr_reject_given_no_answer": reject_given_not_ae,
    }


def _block_stats(records: Sequence[QueryLogRecord]) -> dict:
    return {
        "n": len(records),
        "mrr": mrr([r.rank for r in records]),
        "hits1": hits_at_k(records, 1),
        "hits10": hits_at_k(records, 10),
    }


def _predicted_stats(records: Sequence[QueryLogRecord]) -> dict:
    """Ranking quality over answered queries only."""
    answered = [r for r in records if r.verdict == Verdict.ANSWER.value]
    ranks = [r.rank for r in answered]
    within = lambda k: (
        100.0 * sum(1 for r in answered if r.rank is not None and r.rank <= k) / len(answered)
        if answered
        else None
    )
    return {
        "n_answered": len(answered),
        "mrr": mrr(ranks),
        "hits1": within(1),
        "hits10": within(10),
    }


_SUBSETS = (
    ("rel_known-ent_known", True, True),
    ("rel_known-ent_unknown", True, False),
    ("rel_unknown-ent_known", False, True),
    ("rel_unknown-ent_unknown", False, False),
)


@dataclass
class EvalReport:
    n_queries: int
    overall: dict
    subsets: dict
    rejection: dict
    over_time: dict
    unanswerable_count: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "overall": self.overall,
            "subsets": self.subsets,
            "rejection": self.rejection,
            "over_time": self.over_time,
            "unanswerable_count": self.unanswerable_count,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def build_report(records: Sequence[QueryLogRecord], config: dict | None = None) -> EvalReport:
    subsets = {}
    for label, rk, ek in _SUBSETS:
        block = [r for r in records if r.r_known == rk and r.e_known == ek]
        subsets[label] = _block_stats(block)
    over_time = {}
    for pct in (50, 100):
        prefix = list(records[: math.ceil(len(records) * pct / 100.0)])
        over_time[str(pct)] = {
            "overall": _predicted_stats(prefix),
            "open_world": _predicted_stats([r for r in prefix if r.open_world]),
        }
    return EvalReport(
        n_queries=len(records),
        overall=_block_stats(list(records)),
        subsets=subsets,
        rejection=rejection_stats(records),
        over_time=over_time,
        unanswerable_count=sum(
            1 for r in records if r.verdict == Verdict.UNANSWERABLE.value
        ),
        config=config or {},
    )


@dataclass
class StreamResult:
    records: list[QueryLogRecord]
    report: EvalReport
    mean_session_seconds: float


def run_stream(
    engine: Engine,
    world: SimWorld,
    rng: np.random.Generator,
    shuffle: bool = True,
) -> StreamResult:
    """Process the world's queries once, in a shuffled order, and score them.

    The given generator drives the stream order and the simulated user's
    draws; the engine consumes its own generator.  A session that dies on
    a channel failure logs as unanswerable and the stream continues.
    """
    queries: list[WorldQuery] = list(world.queries)
    if shuffle:
        order = rng.permutation(len(queries))
        queries = [queries[i] for i in order]
    records: list[QueryLogRecord] = []
    t0 = time.monotonic()
    for idx, wq in enumerate(queries):
        user = SimulatedUser(world.user_kb, rng, pending=wq.query)
        asked_clue = asked_fact = False
        try:
            outcome = engine.process_query(wq.query, user)
            verdict = outcome.verdict
            decision = outcome.decision
            asked_clue = outcome.asked_clue
            asked_fact = outcome.asked_fact
        except ChannelError:
            verdict = Verdict.UNANSWERABLE
            decision = None
        registered = [a for a in wq.answers if engine.kb.has_entity(a)]
        ae = bool(registered)
        rank: int | None = None
        if ae and decision is not None and decision.scores is not None:
            ids = np.array([engine.kb.entity_id(a) for a in registered], dtype=np.intp)
            rank = rank_of_best(decision.scores, ids)
        records.append(
            QueryLogRecord(
                idx=idx,
                direction=wq.query.direction.value,
                entity=wq.query.entity,
                relation=wq.query.relation,
                e_known=wq.e_known,
                r_known=wq.r_known,
                asked_clue=asked_clue,
                asked_fact=asked_fact,
                verdict=verdict.value,
                rank=rank,
                ae=ae,
            )
        )
    elapsed = time.monotonic() - t0
    mean_seconds = elapsed / len(queries) if queries else 0.0
    return StreamResult(
        records=records,
        report=build_report(records),
        mean_session_seconds=mean_seconds,
    )


# -- per-query log TSV ------------------------------------------------------------

_LOG_COLUMNS = (
    "idx",
    "direction",
    "entity",
    "relation",
    "e_known",
    "r_known",
    "asked_clue",
    "asked_fact",
    "verdict",
    "rank",
    "ae_flag",
)


def write_log(records: Sequence[QueryLogRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_LOG_COLUMNS) + "\n")
        for r in records:
            fh.write(
                f"{r.idx}\t{r.direction}\t{r.entity}\t{r.relation}\t{int(r.e_known)}\t"
                f"{int(r.r_known)}\t{int(r.asked_clue)}\t{int(r.asked_fact)}\t{r.verdict}\t"
                f"{'' if r.rank is None else r.rank}\t{int(r.ae)}\n"
            )


def read_log(path: str) -> list[QueryLogRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != _LOG_COLUMNS:
            raise ValueError(f"{path}: unexpected log header {header}")
        for raw in fh:
            p = raw.rstrip("\n").split("\t")
            records.append(
                QueryLogRecord(
                    idx=int(p[0]),
                    direction=p[1],
                    entity=p[2],
                    relation=p[3],
                    e_known=bool(int(p[4])),
                    r_known=bool(int(p[5])),
                    asked_clue=bool(int(p[6])),
                    asked_fact=bool(int(p[7])),
                    verdict=p[8],
                    rank=int(p[9]) if p[9] else None,
                    ae=bool(int(p[10])),
                )
            )
    return records


# -- sweeps -----------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    variant: ThresholdVariant
    sampling: SamplingStrategy
    max_clues: int
    max_entity_facts: int
    use_performance_buffer: bool = True

    @property
    def name(self) -> str:
        tag = (
            f"{self.variant.value}-{self.sampling.value}-"
            f"c{self.max_clues}f{self.max_entity_facts}"
        )
        return tag + ("" if self.use_performance_buffer else "-nobuffer")


def sweep(
    world: SimWorld,
    hyper: ModelHyper,
    session_config: SessionConfig,
    init_epochs: int,
    seed: int,
    cells: Sequence[SweepCell],
) -> dict[str, StreamResult]:
    """One isolated engine run per cell over an identical query order.

    Initial training does not depend on any per-cell knob, so the freshly
    initialized engine is built once and deep-copied per cell; each cell
    then consumes its own stream generator seeded identically.
    """
    base_kb = copy.deepcopy(world.base_kb)
    engine0 = initial_training(
        base_kb, hyper, session_config, init_epochs, np.random.default_rng(seed)
    )
    results: dict[str, StreamResult] = {}
    for cell in cells:
        engine = copy.deepcopy(engine0)
        engine.config = replace(
            session_config,
            threshold_variant=cell.variant,
            sampling=cell.sampling,
            max_clues=cell.max_clues,
            max_entity_facts=cell.max_entity_facts,
            use_performance_buffer=cell.use_performance_buffer,
        )
        result = run_stream(engine, world, np.random.default_rng(seed))
        result.report.config = {
            "cell": cell.name,
            "threshold_variant": cell.variant.value,
            "sampling": cell.sampling.value,
            "max_clues": cell.max_clues,
            "max_entity_facts": cell.max_entity_facts,
            "use_performance_buffer": cell.use_performance_buffer,
            "seed": seed,
        }
        results[cell.name] = result
    return results


def grid_cells(
    variants: Sequence[ThresholdVariant],
    samplings: Sequence[SamplingStrategy],
    budgets: Sequence[tuple[int, int]],
    buffer_modes: Sequence[bool] = (True,),
) -> list[SweepCell]:
    """Cross product of the requested axes, in a stable order."""
    return [
        SweepCell(v, s, c, f, b)
        for v in variants
        for s in samplings
        for c, f in budgets
        for b in buffer_modes
    ]
