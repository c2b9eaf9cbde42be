"""Triple store with integer-encoded symbols and train/valid split marks.

The store keeps a registry mapping entity and relation names to dense
integer ids (ids are assigned in first-seen order and never reused or
freed), a triple set keyed by id-triples, and per-entity / per-relation
adjacency lists in insertion order.  Insertion order, not hash order,
drives every iteration and sampling path so that identically seeded runs
produce identical results regardless of interpreter hash randomization.

Each stored triple carries a split mark (train or valid) assigned when
the triple is inserted; re-inserting an existing triple is a no-op and
never re-marks it.  The TSV format is one triple per line,
``head<TAB>relation<TAB>tail[<TAB>split]``, with ``#`` comment lines and
blank lines ignored and the split defaulting to train.  ``save_kb``
emits sorted lines with an explicit split column, so save / load / save
round-trips are byte-identical.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np


class Split(str, enum.Enum):
    TRAIN = "train"
    VALID = "valid"


class AddOutcome(enum.Enum):
    ADDED = "added"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    split: Split = Split.TRAIN

    def key(self) -> tuple[str, str, str]:
        """Identity of the triple; the split mark is not part of it."""
        return (self.head, self.relation, self.tail)


class KBFormatError(ValueError):
    """Raised on malformed KB files; carries the offending line number."""

    def __init__(self, message: str, path: str = "", line_no: int = 0):
        detail = message
        if path:
            detail = f"{path}:{line_no}: {message}"
        super().__init__(detail)
        self.path = path
        self.line_no = line_no


def _validate_name(name: str, role: str) -> None:
    if not name:
        raise ValueError(f"empty {role} name")
    if "\t" in name or "\n" in name or "\r" in name:
        raise ValueError(f"{role} name contains tab or newline: {name!r}")


@dataclass
class KnowledgeBase:
    """Mutable triple store; grows monotonically (no deletion op)."""

    _entity_ids: dict[str, int] = field(default_factory=dict)
    _entity_names: list[str] = field(default_factory=list)
    _relation_ids: dict[str, int] = field(default_factory=dict)
    _relation_names: list[str] = field(default_factory=list)
    _triples: dict[tuple[int, int, int], Split] = field(default_factory=dict)
    _by_entity: dict[int, list[tuple[int, int, int]]] = field(default_factory=dict)
    _by_relation: dict[int, list[tuple[int, int, int]]] = field(default_factory=dict)

    # -- registry -----------------------------------------------------------

    @property
    def n_entities(self) -> int:
        return len(self._entity_names)

    @property
    def n_relations(self) -> int:
        return len(self._relation_names)

    @property
    def n_triples(self) -> int:
        return len(self._triples)

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    def has_relation(self, name: str) -> bool:
        return name in self._relation_ids

    def is_known(self, name: str) -> bool:
        """True iff the name is registered as an entity or a relation."""
        return name in self._entity_ids or name in self._relation_ids

    def entity_id(self, name: str) -> int:
        return self._entity_ids[name]

    def relation_id(self, name: str) -> int:
        return self._relation_ids[name]

    def entity_name(self, eid: int) -> str:
        return self._entity_names[eid]

    def relation_name(self, rid: int) -> str:
        return self._relation_names[rid]

    def entity_names(self) -> list[str]:
        return list(self._entity_names)

    def relation_names(self) -> list[str]:
        return list(self._relation_names)

    def _intern_entity(self, name: str) -> int:
        eid = self._entity_ids.get(name)
        if eid is None:
            eid = len(self._entity_names)
            self._entity_ids[name] = eid
            self._entity_names.append(name)
            self._by_entity[eid] = []
        return eid

    def _intern_relation(self, name: str) -> int:
        rid = self._relation_ids.get(name)
        if rid is None:
            rid = len(self._relation_names)
            self._relation_ids[name] = rid
            self._relation_names.append(name)
            self._by_relation[rid] = []
        return rid

    # -- triples ------------------------------------------------------------

    def add(self, triple: Triple) -> AddOutcome:
        """Insert one triple, registering unseen names as a side effect."""
        _validate_name(triple.head, "entity")
        _validate_name(triple.relation, "relation")
        _validate_name(triple.tail, "entity")
        h = self._intern_entity(triple.head)
        r = self._intern_relation(triple.relation)
        t = self._intern_entity(triple.tail)
        key = (h, r, t)
        if key in self._triples:
            return AddOutcome.DUPLICATE
        self._triples[key] = triple.split
        self._by_entity[h].append(key)
        if t != h:
            self._by_entity[t].append(key)
        self._by_relation[r].append(key)
        return AddOutcome.ADDED

    def add_all(self, triples: Iterable[Triple]) -> int:
        """Insert many triples; returns the number actually added."""
        return sum(1 for t in triples if self.add(t) is AddOutcome.ADDED)

    def contains(self, head: str, relation: str, tail: str) -> bool:
        h = self._entity_ids.get(head)
        r = self._relation_ids.get(relation)
        t = self._entity_ids.get(tail)
        if h is None or r is None or t is None:
            return False
        return (h, r, t) in self._triples

    def contains_ids(self, h: int, r: int, t: int) -> bool:
        return (h, r, t) in self._triples

    def split_of(self, triple: Triple) -> Split:
        key = (
            self._entity_ids[triple.head],
            self._relation_ids[triple.relation],
            self._entity_ids[triple.tail],
        )
        return self._triples[key]

    def _to_triple(self, key: tuple[int, int, int]) -> Triple:
        h, r, t = key
        return Triple(
            self._entity_names[h],
            self._relation_names[r],
            self._entity_names[t],
            self._triples[key],
        )

    def triples(self) -> Iterator[Triple]:
        """All triples in insertion order."""
        for key in self._triples:
            yield self._to_triple(key)

    def triples_with_entity(self, name: str, split: Split | None = None) -> list[Triple]:
        """Triples using the name in an entity slot, insertion order."""
        eid = self._entity_ids.get(name)
        if eid is None:
            return []
        keys = self._by_entity[eid]
        return [
            self._to_triple(k) for k in keys if split is None or self._triples[k] is split
        ]

    def triples_with_relation(self, name: str, split: Split | None = None) -> list[Triple]:
        """Triples using the name as the relation, insertion order."""
        rid = self._relation_ids.get(name)
        if rid is None:
            return []
        keys = self._by_relation[rid]
        return [
            self._to_triple(k) for k in keys if split is None or self._triples[k] is split
        ]

    def triples_involving(self, name: str, split: Split | None = None) -> list[Triple]:
        """Triples containing the name as any slot, insertion order, deduped."""
        keys: dict[tuple[int, int, int], None] = {}
        eid = self._entity_ids.get(name)
        if eid is not None:
            for key in self._by_entity[eid]:
                keys[key] = None
        rid = self._relation_ids.get(name)
        if rid is not None:
            for key in self._by_relation[rid]:
                keys[key] = None
        out = []
        for key in keys:
            if split is None or self._triples[key] is split:
                out.append(self._to_triple(key))
        return out

    def sample_involving(
        self,
        name: str,
        split: Split | None,
        max_n: int,
        rng: np.random.Generator,
    ) -> list[Triple]:
        """Uniform sample without replacement of triples containing name.

        Returns every candidate when fewer than max_n exist, and an empty
        list for an unregistered name.
        """
        cands = self.triples_involving(name, split)
        if max_n <= 0 or not cands:
            return []
        if len(cands) <= max_n:
            return cands
        idx = rng.choice(len(cands), size=max_n, replace=False)
        return [cands[i] for i in sorted(idx)]

    # -- completion lookups (used for answer sets) --------------------------

    def tail_ids(self, h: int, r: int) -> list[int]:
        """Distinct t with (h, r, t) stored, in insertion order."""
        out: dict[int, None] = {}
        for key in self._by_entity.get(h, ()):
            if key[0] == h and key[1] == r:
                out[key[2]] = None
        return list(out)

    def head_ids(self, r: int, t: int) -> list[int]:
        """Distinct h with (h, r, t) stored, in insertion order."""
        out: dict[int, None] = {}
        for key in self._by_entity.get(t, ()):
            if key[2] == t and key[1] == r:
                out[key[0]] = None
        return list(out)

    # -- split marking -------------------------------------------------------

    def mark_random_split(self, alpha: float, rng: np.random.Generator) -> tuple[int, int]:
        """Re-mark all triples with exactly round(alpha * n) train marks.

        Used once when an engine is initialized from a freshly loaded base
        KB (files without a split column default everything to train).
        Returns (n_train, n_valid).
        """
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        keys = list(self._triples)
        n_train = int(round(alpha * len(keys)))
        order = rng.permutation(len(keys))
        for pos, i in enumerate(order):
            self._triples[keys[i]] = Split.TRAIN if pos < n_train else Split.VALID
        return n_train, len(keys) - n_train


def load_kb(path: str) -> KnowledgeBase:
    """Parse a triple TSV file; malformed lines raise KBFormatError."""
    kb = KnowledgeBase()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise KBFormatError(
                    f"expected 3 or 4 tab-separated fields, got {len(parts)}",
                    path=path,
                    line_no=line_no,
                )
            head, relation, tail = parts[0], parts[1], parts[2]
            split = Split.TRAIN
            if len(parts) == 4:
                try:
                    split = Split(parts[3])
                except ValueError:
                    raise KBFormatError(
                        f"unknown split mark {parts[3]!r}", path=path, line_no=line_no
                    ) from None
            try:
                kb.add(Triple(head, relation, tail, split))
            except ValueError as exc:
                raise KBFormatError(str(exc), path=path, line_no=line_no) from None
    return kb


def save_kb(kb: KnowledgeBase, path: str) -> None:
    """Write all triples as sorted 4-column TSV lines."""
    lines = [
        f"{t.head}\t{t.relation}\t{t.tail}\t{t.split.value}\n"
        for t in sorted(kb.triples(), key=Triple.key)
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(lines)
