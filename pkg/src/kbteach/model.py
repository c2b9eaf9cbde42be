"""Trilinear embedding model with margin ranking training.

Entities and relations live in two dense float64 tables aligned with the
KB registries (row i embeds the symbol with id i).  A triple (h, r, t)
scores as the sum over dimensions of the elementwise product of the
three rows; the score is symmetric in head and tail, which is a known
limitation of this family and is accepted here.

Training minimizes a pairwise hinge: every positive triple is paired
with corruptions of itself (head or tail replaced by a random entity
such that the corrupted triple is not in the KB), and each pair whose
negative score comes within the margin of the positive score
contributes ``neg - pos + margin`` to the loss.  Gradients are exact and
sparse: only rows appearing in the batch are touched, and an L2 penalty
applies to exactly those rows.  Updates use Adam with bias-corrected
moments kept per row; rows added later start with zero moments.

All randomness flows through an explicit numpy Generator, so identical
seeds and inputs reproduce the tables bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .kb import KnowledgeBase, Triple

IdTriple = tuple[int, int, int]

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8
_NEGATIVE_RETRY_CAP = 100


@dataclass
class ModelHyper:
    dim: int = 250
    learning_rate: float = 0.001
    l2_coeff: float = 0.001
    negatives_per_positive: int = 4
    batch_size: int = 128
    margin: float = 1.0  # fixed by the loss definition; kept visible for summaries


@dataclass
class LossGrads:
    loss: float
    hinge: float
    l2_term: float
    entity_rows: np.ndarray
    entity_grads: np.ndarray
    relation_rows: np.ndarray
    relation_grads: np.ndarray
    n_active_pairs: int


@dataclass
class TrainingSummary:
    epochs: int = 0
    n_triples: int = 0
    batches: int = 0
    epoch_losses: list[float] = field(default_factory=list)
    epoch_hinges: list[float] = field(default_factory=list)
    negative_shortfalls: int = 0

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None

    @property
    def final_hinge(self) -> float | None:
        return self.epoch_hinges[-1] if self.epoch_hinges else None

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "n_triples": self.n_triples,
            "batches": self.batches,
            "epoch_losses": self.epoch_losses,
            "epoch_hinges": self.epoch_hinges,
            "negative_shortfalls": self.negative_shortfalls,
        }


class EmbeddingModel:
    """Two embedding tables plus per-row Adam state."""

    def __init__(
        self,
        hyper: ModelHyper,
        n_entities: int,
        n_relations: int,
        rng: np.random.Generator,
    ):
        self.hyper = hyper
        bound = 6.0 / np.sqrt(hyper.dim)
        self.entities = rng.uniform(-bound, bound, size=(n_entities, hyper.dim))
        self.relations = rng.uniform(-bound, bound, size=(n_relations, hyper.dim))
        self._m_ent = np.zeros_like(self.entities)
        self._v_ent = np.zeros_like(self.entities)
        self._m_rel = np.zeros_like(self.relations)
        self._v_rel = np.zeros_like(self.relations)
        self.step = 0

    @property
    def dim(self) -> int:
        return self.hyper.dim

    @property
    def n_entities(self) -> int:
        return self.entities.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relations.shape[0]

    def grow(self, n_new_entities: int, n_new_relations: int, rng: np.random.Generator) -> None:
        """Append freshly initialized rows; existing rows are untouched."""
        if n_new_entities < 0 or n_new_relations < 0:
            raise ValueError("row counts only grow")
        bound = 6.0 / np.sqrt(self.dim)
        if n_new_entities:
            new = rng.uniform(-bound, bound, size=(n_new_entities, self.dim))
            self.entities = np.vstack([self.entities, new])
            self._m_ent = np.vstack([self._m_ent, np.zeros_like(new)])
            self._v_ent = np.vstack([self._v_ent, np.zeros_like(new)])
        if n_new_relations:
            new = rng.uniform(-bound, bound, size=(n_new_relations, self.dim))
            self.relations = np.vstack([self.relations, new])
            self._m_rel = np.vstack([self._m_rel, np.zeros_like(new)])
            self._v_rel = np.vstack([self._v_rel, np.zeros_like(new)])

    def sync_with(self, kb: KnowledgeBase, rng: np.random.Generator) -> None:
        """Grow to match the KB registries (the KB never shrinks)."""
        self.grow(kb.n_entities - self.n_entities, kb.n_relations - self.n_relations, rng)

    # -- scoring -------------------------------------------------------------

    def score(self, h: int, r: int, t: int) -> float:
        """Reference scalar path; agrees with the vectorized path to ~1e-12."""
        return float(np.dot(self.entities[h] * self.relations[r], self.entities[t]))

    def score_all_tails(self, h: int, r: int) -> np.ndarray:
        """Scores of (h, r, t) for every registered entity t."""
        return self.entities @ (self.entities[h] * self.relations[r])

    def score_all_heads(self, r: int, t: int) -> np.ndarray:
        """Scores of (h, r, t) for every registered entity h."""
        return self.entities @ (self.relations[r] * self.entities[t])

    # -- loss and gradients ---------------------------------------------------

    def hinge_loss_and_grads(
        self,
        positives: Sequence[IdTriple],
        negatives_map: Mapping[IdTriple, Sequence[IdTriple]],
    ) -> LossGrads:
        pos = np.asarray(list(positives), dtype=np.intp).reshape(-1, 3)
        neg_rows: list[IdTriple] = []
        pair_pos: list[int] = []
        for i, p in enumerate(positives):
            for n in negatives_map.get(tuple(p), ()):
                neg_rows.append(n)
                pair_pos.append(i)
        neg = np.asarray(neg_rows, dtype=np.intp).reshape(-1, 3)
        pair = np.asarray(pair_pos, dtype=np.intp)
        return self._hinge_from_arrays(pos, neg, pair)

    def _hinge_from_arrays(
        self, pos: np.ndarray, neg: np.ndarray, pair: np.ndarray
    ) -> LossGrads:
        E, R = self.entities, self.relations
        ph, pr, pt = pos[:, 0], pos[:, 1], pos[:, 2]
        nh, nr, nt = neg[:, 0], neg[:, 1], neg[:, 2]

        s_pos = np.einsum("ij,ij,ij->i", E[ph], R[pr], E[pt]) if len(pos) else np.zeros(0)
        s_neg = np.einsum("ij,ij,ij->i", E[nh], R[nr], E[nt]) if len(neg) else np.zeros(0)
        margins = s_neg - s_pos[pair] + self.hyper.margin if len(neg) else np.zeros(0)
        active = margins > 0
        hinge = float(margins[active].sum()) if len(neg) else 0.0

        ent_idx: list[np.ndarray] = []
        ent_grad: list[np.ndarray] = []
        rel_idx: list[np.ndarray] = []
        rel_grad: list[np.ndarray] = []

        if active.any():
            ah, ar, at = nh[active], nr[active], nt[active]
            ent_idx += [ah, at]
            ent_grad += [R[ar] * E[at], E[ah] * R[ar]]
            rel_idx.append(ar)
            rel_grad.append(E[ah] * E[at])
            # each active pair pulls its positive's score up by one unit
            counts = np.bincount(pair[active], minlength=len(pos)).astype(float)
            hit = counts > 0
            c = counts[hit][:, None]
            bh, br, bt = ph[hit], pr[hit], pt[hit]
            ent_idx += [bh, bt]
            ent_grad += [-c * R[br] * E[bt], -c * E[bh] * R[br]]
            rel_idx.append(br)
            rel_grad.append(-c * E[bh] * E[bt])

        # L2 on every row the batch touches, active or not
        touched_ent = np.unique(np.concatenate([ph, pt, nh, nt])) if len(pos) else np.zeros(0, np.intp)
        touched_rel = np.unique(np.concatenate([pr, nr])) if len(pos) else np.zeros(0, np.intp)
        l2 = self.hyper.l2_coeff
        l2_term = float(l2 * ((E[touched_ent] ** 2).sum() + (R[touched_rel] ** 2).sum()))
        if l2 != 0.0 and len(touched_ent):
            ent_idx.append(touched_ent)
            ent_grad.append(2.0 * l2 * E[touched_ent])
            rel_idx.append(touched_rel)
            rel_grad.append(2.0 * l2 * R[touched_rel])

        ent_rows, ent_grads = _accumulate(ent_idx, ent_grad, self.dim)
        rel_rows, rel_grads = _accumulate(rel_idx, rel_grad, self.dim)
        return LossGrads(
            loss=hinge + l2_term,
            hinge=hinge,
            l2_term=l2_term,
            entity_rows=ent_rows,
            entity_grads=ent_grads,
            relation_rows=rel_rows,
            relation_grads=rel_grads,
            n_active_pairs=int(active.sum()),
        )

    # -- optimizer -------------------------------------------------------------

    def adam_step(self, grads: LossGrads) -> None:
        """One bias-corrected Adam update restricted to the touched rows."""
        self.step += 1
        t = self.step
        lr = self.hyper.learning_rate
        c1 = 1.0 - _ADAM_BETA1**t
        c2 = 1.0 - _ADAM_BETA2**t
        for rows, g, table, m, v in (
            (grads.entity_rows, grads.entity_grads, self.entities, self._m_ent, self._v_ent),
            (grads.relation_rows, grads.relation_grads, self.relations, self._m_rel, self._v_rel),
        ):
            if not len(rows):
                continue
            m[rows] = _ADAM_BETA1 * m[rows] + (1.0 - _ADAM_BETA1) * g
            v[rows] = _ADAM_BETA2 * v[rows] + (1.0 - _ADAM_BETA2) * g * g
            m_hat = m[rows] / c1
            v_hat = v[rows] / c2
            table[rows] -= lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)


def _accumulate(
    idx_parts: list[np.ndarray], grad_parts: list[np.ndarray], dim: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-row gradient contributions into one (rows, grads) pair."""
    if not idx_parts:
        return np.zeros(0, dtype=np.intp), np.zeros((0, dim))
    idx = np.concatenate(idx_parts)
    grad = np.concatenate(grad_parts, axis=0)
    rows, inverse = np.unique(idx, return_inverse=True)
    out = np.zeros((len(rows), dim))
    np.add.at(out, inverse, grad)
    return rows, out


def negative_samples(
    kb: KnowledgeBase,
    positive: Triple,
    k: int,
    rng: np.random.Generator,
) -> tuple[list[Triple], bool]:
    """Corrupt head or tail of a stored triple with uniform random entities.

    Each corruption replaces exactly one slot (side chosen uniformly) with
    an entity drawn uniformly from the registry, rejecting candidates that
    are stored triples or repeats.  Returns the distinct corruptions found
    plus a flag that is True when the retry budget ran out short of k.
    """
    h = kb.entity_id(positive.head)
    r = kb.relation_id(positive.relation)
    t = kb.entity_id(positive.tail)
    ids, short = _negative_ids(kb, (h, r, t), k, rng)
    out = [
        Triple(kb.entity_name(nh), kb.relation_name(nr), kb.entity_name(nt))
        for nh, nr, nt in ids
    ]
    return out, short


def _negative_ids(
    kb: KnowledgeBase,
    positive: IdTriple,
    k: int,
    rng: np.random.Generator,
) -> tuple[list[IdTriple], bool]:
    h, r, t = positive
    n = kb.n_entities
    found: dict[IdTriple, None] = {}
    short = False
    for _ in range(k):
        ok = False
        for _ in range(_NEGATIVE_RETRY_CAP):
            e = int(rng.integers(n))
            cand = (e, r, t) if rng.integers(2) == 0 else (h, r, e)
            if cand in found or kb.contains_ids(*cand):
                continue
            found[cand] = None
            ok = True
            break
        if not ok:
            short = True
    return list(found), short


def train(
    model: EmbeddingModel,
    kb: KnowledgeBase,
    triples: Sequence[Triple],
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> TrainingSummary:
    """Mini-batch margin ranking over the given triples.

    Negatives are resampled fresh for every batch in every epoch.  The
    per-epoch loss figures are means per positive triple.
    """
    summary = TrainingSummary(epochs=0, n_triples=len(triples))
    if epochs <= 0 or not triples:
        return summary
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    ids = np.array(
        [
            (kb.entity_id(t.head), kb.relation_id(t.relation), kb.entity_id(t.tail))
            for t in triples
        ],
        dtype=np.intp,
    )
    k = model.hyper.negatives_per_positive
    for _ in range(epochs):
        order = rng.permutation(len(ids))
        total = 0.0
        total_hinge = 0.0
        for start in range(0, len(ids), batch_size):
            batch = ids[order[start : start + batch_size]]
            neg_rows: list[IdTriple] = []
            pair: list[int] = []
            for i, row in enumerate(batch):
                negs, short = _negative_ids(kb, (int(row[0]), int(row[1]), int(row[2])), k, rng)
                if short:
                    summary.negative_shortfalls += 1
                neg_rows.extend(negs)
                pair.extend([i] * len(negs))
            grads = model._hinge_from_arrays(
                batch,
                np.asarray(neg_rows, dtype=np.intp).reshape(-1, 3),
                np.asarray(pair, dtype=np.intp),
            )
            model.adam_step(grads)
            total += grads.loss
            total_hinge += grads.hinge
            summary.batches += 1
        summary.epoch_losses.append(total / len(ids))
        summary.epoch_hinges.append(total_hinge / len(ids))
        summary.epochs += 1
    return summary
