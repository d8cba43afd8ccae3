"""Call-sequence generation over the property graph.

Each schema contributes producer x consumer pairs; visiting equivalence-linked
schemas in turn lets those pairs chain onto earlier sequences, after which the
CRUD ordering rules prune the result.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .errors import UnknownSchemaError
from .rpg import Rpg
from .spec_model import CrudKind


@dataclass(frozen=True)
class CallSequence:
    operations: tuple
    provenance: frozenset = frozenset()

    def __post_init__(self):
        if not self.operations:
            raise ValueError("a call sequence needs at least one operation")

    def __len__(self):
        return len(self.operations)

    @property
    def first(self) -> str:
        return self.operations[0]

    @property
    def last(self) -> str:
        return self.operations[-1]


class SequenceSet:
    """Insertion-ordered set of call sequences keyed by operation vector."""

    def __init__(self, sequences: Iterable[CallSequence] = ()):
        self._items: dict[tuple, CallSequence] = {}
        for seq in sequences:
            self.add(seq)

    def add(self, seq: CallSequence) -> bool:
        existing = self._items.get(seq.operations)
        if existing is None:
            self._items[seq.operations] = seq
            return True
        if not seq.provenance <= existing.provenance:
            self._items[seq.operations] = CallSequence(seq.operations, existing.provenance | seq.provenance)
        return False

    def update(self, other: Iterable[CallSequence]) -> None:
        for seq in other:
            self.add(seq)

    def copy(self) -> "SequenceSet":
        return SequenceSet(self)

    def vectors(self) -> list[tuple]:
        return list(self._items)

    def to_json(self) -> list[list[str]]:
        return [list(v) for v in self._items]

    def __iter__(self) -> Iterator[CallSequence]:
        return iter(list(self._items.values()))

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item) -> bool:
        ops = item.operations if isinstance(item, CallSequence) else tuple(item)
        return ops in self._items

    def __repr__(self):
        return f"SequenceSet({self.vectors()!r})"


@dataclass
class GenConfig:
    max_sequence_length: int = 5
    max_sequences_per_schema: int = 64
    schema_visit_order: str = "lexicographic"  # or "seeded-shuffle"
    use_candidate_equivalence: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.max_sequence_length < 1:
            raise ValueError("max_sequence_length must be >= 1")
        if self.max_sequences_per_schema < 1:
            raise ValueError("max_sequences_per_schema must be >= 1")
        if self.schema_visit_order not in ("lexicographic", "seeded-shuffle"):
            raise ValueError(f"unknown schema_visit_order {self.schema_visit_order!r}")


UNBOUNDED = GenConfig(max_sequence_length=10**6, max_sequences_per_schema=10**9)


def cartesian_pairs(rpg: Rpg, schema: str, cfg: GenConfig) -> list[CallSequence]:
    """Producer x consumer pairs for one schema, Create producers first, capped."""
    o_out = sorted(rpg.producers_of(schema), key=lambda o: (rpg.crud(o) is not CrudKind.CREATE, o))
    o_in = sorted(rpg.consumers_of(schema))
    pairs = [CallSequence((a, b), frozenset([schema])) for a in o_out for b in o_in]
    return pairs[: cfg.max_sequences_per_schema]


def concat(acc: SequenceSet, fresh: Iterable[CallSequence], max_len: Optional[int] = None) -> SequenceSet:
    result = acc.copy()
    fresh = list(fresh)
    for seq in acc:
        for pair in fresh:
            o_out, o_in = pair.operations
            prov = seq.provenance | pair.provenance
            if seq.last == o_out:
                grown = seq.operations + (o_in,)
                if max_len is None or len(grown) <= max_len:
                    result.add(CallSequence(grown, prov))
            if o_in == seq.first:
                grown = (o_out,) + seq.operations
                if max_len is None or len(grown) <= max_len:
                    result.add(CallSequence(grown, prov))
    return result


def visit(schema: str, visited: set, rpg: Rpg, acc: SequenceSet, cfg: GenConfig) -> SequenceSet:
    if schema not in rpg.schema_nodes:
        raise UnknownSchemaError(schema)
    if not rpg.producers_of(schema) or not rpg.consumers_of(schema):
        return acc
    visited.add(schema)
    fresh = [p for p in cartesian_pairs(rpg, schema, cfg) if len(p) <= cfg.max_sequence_length]
    acc = concat(acc, fresh, cfg.max_sequence_length)
    acc.update(fresh)
    state = "any" if cfg.use_candidate_equivalence else "confirmed"
    # with no neighbour the recursion is skipped but the pairs above still count
    for neighbor in sorted(rpg.equivalence_neighbors(schema, state)):
        if neighbor not in visited:
            acc = visit(neighbor, visited, rpg, acc, cfg)
    return acc


def crud_valid(operations: Sequence[str], rpg: Rpg) -> bool:
    touched = [rpg.schemas_of_operation(op) for op in operations]
    kinds = [rpg.crud(op) for op in operations]
    for schema in set().union(*touched) if touched else ():
        on_schema = [i for i, t in enumerate(touched) if schema in t]
        seen_delete = False
        for i in on_schema:
            if seen_delete:
                return False
            if kinds[i] is CrudKind.DELETE:
                seen_delete = True
        creates = [i for i in on_schema if kinds[i] is CrudKind.CREATE]
        if creates and any(i < creates[0] for i in on_schema):
            return False
    return True


def crud_filter(sequences: SequenceSet, rpg: Rpg) -> SequenceSet:
    return SequenceSet(seq for seq in sequences if crud_valid(seq.operations, rpg))


def generate_call_sequences(rpg: Rpg, cfg: Optional[GenConfig] = None) -> SequenceSet:
    cfg = cfg or GenConfig()
    order = sorted(rpg.schema_nodes)
    if cfg.schema_visit_order == "seeded-shuffle":
        random.Random(cfg.seed).shuffle(order)
    result = SequenceSet()
    for schema in order:
        result.update(visit(schema, set(), rpg, SequenceSet(), cfg))
    result = crud_filter(result, rpg)
    covered = {op for seq in result for op in seq.operations}
    for op in sorted(rpg.operation_nodes):
        if op not in covered:
            result.add(CallSequence((op,)))
    return result


def random_sequences(operation_ids: Sequence[str], count: int, max_len: int, rng: random.Random) -> list[CallSequence]:
    """Uniform random operation vectors; the graph-free baseline."""
    ops = sorted(operation_ids)
    out = []
    for _ in range(count):
        n = rng.randint(1, max_len)
        out.append(CallSequence(tuple(rng.choice(ops) for _ in range(n))))
    return out
