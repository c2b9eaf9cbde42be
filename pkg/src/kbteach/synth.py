"""Structured random KB generator for protocol runs and demos.

Real-world snapshots backing the published evaluation setups are not
redistributable, so desk-scale experiments run on generated stores that
keep the same learnable shape.  Entities fall into clusters, each with a
few designated "capital" entities.  Every ordinary member is tagged to
its cluster's capitals by a membership relation, and a participating
member picks one home capital and pairs with it under several symmetric
partner relations at once (both orientations stored, the way real stores
record sibling_of or adjacent_to; co-occurring relations over the same
pairs mirror how colleague_of, coauthor_of and friend_of overlap in real
graphs).  Directed scatter relations (cluster to cluster, any member)
plus a pinch of uniform noise keep the task from being trivially
separable.  A ranking model can then recover a hidden orientation from
its stored mirror, and fall back on correlated-relation or membership
evidence, at a visibly weaker scale, when the mirror is missing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kb import AddOutcome, KnowledgeBase, Triple


@dataclass
class SynthConfig:
    n_entities: int = 1200
    n_clusters: int = 8
    n_sym_relations: int = 6
    hubs_per_cluster: int = 2
    member_fraction: float = 0.3
    relations_per_member: int = 2
    n_scatter_relations: int = 2
    scatter_triples: int = 120
    n_category_relations: int = 0
    noise_fraction: float = 0.06

    @property
    def n_relations(self) -> int:
        return self.n_sym_relations + self.n_scatter_relations + self.n_category_relations

    def validate(self) -> None:
        if self.n_clusters < 2:
            raise ValueError("need at least two clusters")
        per_cluster = self.n_entities // self.n_clusters
        if per_cluster < self.hubs_per_cluster + 2:
            raise ValueError("clusters too small for the requested capital count")
        if self.n_sym_relations < 1:
            raise ValueError("need at least one symmetric relation")
        if not 0.0 < self.member_fraction <= 1.0:
            raise ValueError("member_fraction must be in (0, 1]")
        if not 1 <= self.relations_per_member <= self.n_sym_relations:
            raise ValueError("relations_per_member must be in [1, n_sym_relations]")
        if self.n_scatter_relations < 0 or self.scatter_triples < 0:
            raise ValueError("scatter settings must be non-negative")
        if self.n_category_relations < 0:
            raise ValueError("n_category_relations must be non-negative")


def synthetic_original_kb(cfg: SynthConfig, rng: np.random.Generator) -> KnowledgeBase:
    """Generate a clustered store; relation names are rel00, rel01, ...

    Relations are laid out as the n_sym_relations symmetric capital
    relations, then the scatter relations, then the membership relations.
    """
    cfg.validate()
    kb = KnowledgeBase()
    names = [f"ent{i:05d}" for i in range(cfg.n_entities)]
    clusters: list[np.ndarray] = [
        np.arange(c, cfg.n_entities, cfg.n_clusters) for c in range(cfg.n_clusters)
    ]

    # capitals are shared by the symmetric and membership relations, so
    # membership evidence can stand in for a missing symmetric mirror
    capitals = [
        rng.choice(clusters[c], size=cfg.hubs_per_cluster, replace=False)
        for c in range(cfg.n_clusters)
    ]
    pools = [
        clusters[c][~np.isin(clusters[c], capitals[c])] for c in range(cfg.n_clusters)
    ]
    sym_rels = [f"rel{i:02d}" for i in range(cfg.n_sym_relations)]

    for c in range(cfg.n_clusters):
        n_part = max(1, int(round(cfg.member_fraction * len(pools[c]))))
        participants = rng.choice(pools[c], size=n_part, replace=False)
        for m in participants:
            # one home capital, the same one under every joined relation
            h = int(rng.choice(capitals[c]))
            joined = rng.choice(
                cfg.n_sym_relations, size=cfg.relations_per_member, replace=False
            )
            for ri in sorted(joined):
                kb.add(Triple(names[int(m)], sym_rels[ri], names[h]))
                kb.add(Triple(names[h], sym_rels[ri], names[int(m)]))

    rel_idx = cfg.n_sym_relations
    for _ in range(cfg.n_scatter_relations):
        rel = f"rel{rel_idx:02d}"
        rel_idx += 1
        target_of = rng.permutation(cfg.n_clusters)
        added = 0
        attempts = 0
        budget = cfg.scatter_triples * 50
        while added < cfg.scatter_triples and attempts < budget:
            attempts += 1
            c = int(rng.integers(cfg.n_clusters))
            head = int(rng.choice(clusters[c]))
            tail = int(rng.choice(clusters[target_of[c]]))
            if head == tail:
                continue
            if kb.add(Triple(names[head], rel, names[tail])) is AddOutcome.ADDED:
                added += 1
        if added < cfg.scatter_triples:
            raise ValueError(
                f"could not place {cfg.scatter_triples} distinct triples for {rel}; "
                "lower scatter_triples or raise n_entities"
            )

    for _ in range(cfg.n_category_relations):
        rel = f"rel{rel_idx:02d}"
        rel_idx += 1
        for c in range(cfg.n_clusters):
            for m in pools[c]:
                for h in capitals[c]:
                    kb.add(Triple(names[int(m)], rel, names[int(h)]))

    n_noise = int(round(cfg.noise_fraction * kb.n_triples))
    placed = 0
    attempts = 0
    while placed < n_noise and attempts < n_noise * 50:
        attempts += 1
        h = int(rng.integers(cfg.n_entities))
        t = int(rng.integers(cfg.n_entities))
        r = int(rng.integers(cfg.n_relations))
        if h == t:
            continue
        if kb.add(Triple(names[h], f"rel{r:02d}", names[t])) is AddOutcome.ADDED:
            placed += 1
    return kb
