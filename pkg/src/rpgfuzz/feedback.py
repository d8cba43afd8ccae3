"""Refine the property graph from what the service actually returned.

Three ways to add edges and one to remove them:

* a 2xx body that fits an undocumented schema adds a produces edge;
* objects linked by data flow inside one sequence narrow down which properties
  of two schemas hold the same value, and a settled match confirms the
  equivalence;
* a confirmed equivalence copies consumes edges across to the other schema;
* a consumes edge whose bound values keep failing is set aside after Θ
  consecutive failures, and later given another chance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

from .executor import Observation, Outcome
from .matching import MATCH_MODES, match_response_to_schema, objects_in_response
from .rpg import (
    AddConsumesEdge,
    AddProducesEdge,
    ConfirmEquivalence,
    EquivalenceState,
    MarkConsumesInfeasible,
    ReinstateConsumesEdge,
    Rpg,
    _pair,
    apply_mutation,
)

__all__ = [
    "EquivalenceEvidence",
    "FeedbackConfig",
    "canonical",
    "ingest",
    "match_response_to_schema",
    "maybe_reinstate",
    "closure_edges",
]


@dataclass
class FeedbackConfig:
    theta: int = 5
    reinstate_cooldown: int = 10
    schema_match_mode: str = "all-required-properties"

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError("theta must be >= 1")
        if self.reinstate_cooldown < 0:
            raise ValueError("reinstate_cooldown must be >= 0")
        if self.schema_match_mode not in MATCH_MODES:
            raise ValueError(f"unknown schema_match_mode {self.schema_match_mode!r}")


def canonical(value: Any) -> Optional[tuple]:
    """Comparable form of a scalar; None for values that never count as evidence."""
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, (int, float)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        return ("num", value)
    if isinstance(value, str):
        return ("str", value.strip())
    return None


def _narrow(candidates: dict, left: dict, right: dict) -> None:
    for prop, value in left.items():
        key = canonical(value)
        if key is None:
            continue
        equal = {q for q, v in right.items() if canonical(v) == key}
        if prop not in candidates:
            candidates[prop] = equal
        else:
            # a property missing from this object is not a mismatch
            candidates[prop] = {q for q in candidates[prop] if q not in right or q in equal}


@dataclass
class _PairEvidence:
    forward: dict = field(default_factory=dict)  # property of schemas[0] -> properties of schemas[1]
    backward: dict = field(default_factory=dict)  # property of schemas[1] -> properties of schemas[0]
    pair_count: int = 0


class EquivalenceEvidence:
    """Candidate property matches per schema pair, plus the objects seen in the current sequence."""

    def __init__(self):
        self.pairs: dict[tuple, _PairEvidence] = {}
        self._sequence_id: Optional[int] = None
        self._bodies: dict[int, Any] = {}

    def observe(self, schema_a: str, obj_a: dict, schema_b: str, obj_b: dict) -> None:
        pair = _pair(schema_a, schema_b)
        ev = self.pairs.setdefault(pair, _PairEvidence())
        first, second = (obj_a, obj_b) if pair == (schema_a, schema_b) else (obj_b, obj_a)
        _narrow(ev.forward, first, second)
        _narrow(ev.backward, second, first)
        ev.pair_count += 1

    def candidates(self, schema: str, other: str) -> dict:
        """Property of ``schema`` -> set of ``other`` properties still matching."""
        ev = self.pairs.get(_pair(schema, other))
        if ev is None:
            return {}
        side = ev.forward if _pair(schema, other)[0] == schema else ev.backward
        return {k: set(v) for k, v in side.items()}

    def pair_count(self, a: str, b: str) -> int:
        ev = self.pairs.get(_pair(a, b))
        return ev.pair_count if ev else 0

    def settled(self, a: str, b: str) -> Optional[tuple]:
        """Tuples oriented to the sorted pair once the evidence is unambiguous both ways."""
        ev = self.pairs.get(_pair(a, b))
        if ev is None or ev.pair_count == 0:
            return None
        for side in (ev.forward, ev.backward):
            if any(len(v) > 1 for v in side.values()):
                return None
        forward = {(p, next(iter(v))) for p, v in ev.forward.items() if v}
        backward = {(next(iter(v)), p) for p, v in ev.backward.items() if v}
        if not forward or forward != backward:
            return None
        return tuple(sorted(forward))

    # per-sequence object cache

    def remember(self, obs: Observation) -> None:
        if obs.sequence_id != self._sequence_id:
            self._sequence_id = obs.sequence_id
            self._bodies = {}
        if obs.outcome is Outcome.SUCCESS:
            self._bodies[obs.step_index] = obs.parsed_body

    def body_at(self, sequence_id: int, step: int) -> Any:
        if sequence_id != self._sequence_id:
            return None
        return self._bodies.get(step)


def closure_edges(rpg: Rpg, schemas: tuple, tuples: tuple) -> list[AddConsumesEdge]:
    """Consumes edges implied on either side by a confirmed property equivalence."""
    a, b = schemas
    out = []
    for src, dst, mapping in ((a, b, {pa: pb for pa, pb in tuples}), (b, a, {pb: pa for pa, pb in tuples})):
        for edge in sorted(rpg.consumes_edges.values(), key=lambda e: e.key):
            if edge.schema != src:
                continue
            for prop, param in edge.label:
                if prop not in mapping:
                    continue
                wanted = (mapping[prop], param)
                exists = any(
                    e.schema == dst and e.operation == edge.operation and wanted in e.label
                    for e in rpg.consumes_edges.values()
                )
                m = AddConsumesEdge(dst, edge.operation, (wanted,))
                if not exists and m not in out:
                    out.append(m)
    return out


def _apply(rpg: Rpg, m, out: list) -> None:
    apply_mutation(rpg, m)
    out.append(m)


def _scenario_produces(rpg: Rpg, obs: Observation, cfg: FeedbackConfig, out: list) -> None:
    body = obs.parsed_body
    if not isinstance(body, (dict, list)) or not body:
        return
    schemas = {n: node.properties_attr for n, node in rpg.schema_nodes.items()}
    name = match_response_to_schema(body, schemas, cfg.schema_match_mode)
    if name is not None and (obs.operation_id, name) not in rpg.produces_edges:
        _apply(rpg, AddProducesEdge(obs.operation_id, name), out)


def _scenario_equivalence(rpg: Rpg, obs: Observation, evidence: EquivalenceEvidence,
                          cfg: FeedbackConfig, out: list) -> None:
    if not isinstance(obs.parsed_body, dict) or not obs.request.bindings:
        return
    targets = [schema for _, _, schema in objects_in_response(rpg, obs.operation_id, obs.parsed_body,
                                                               cfg.schema_match_mode)]
    target = targets[0] if targets else None
    if target is None:
        return
    seen = set()
    for binding in sorted(obs.request.bindings.values(), key=lambda b: (b.step, b.element or 0, b.parameter)):
        source_key = (binding.step, binding.element)
        if source_key in seen or binding.schema == target:
            continue
        seen.add(source_key)
        edge = rpg.equivalence(binding.schema, target)
        if edge is None or edge.state is not EquivalenceState.CANDIDATE:
            continue
        body = evidence.body_at(obs.sequence_id, binding.step)
        source = body[binding.element] if binding.element is not None and isinstance(body, list) else body
        if not isinstance(source, dict):
            continue
        evidence.observe(binding.schema, source, target, obs.parsed_body)
        tuples = evidence.settled(binding.schema, target)
        if tuples is not None:
            pair = edge.schemas
            _apply(rpg, ConfirmEquivalence(pair, tuples), out)
            for m in closure_edges(rpg, pair, tuples):
                _apply(rpg, m, out)


def _deletion(rpg: Rpg, obs: Observation, cfg: FeedbackConfig, round: int, out: list) -> None:
    if obs.outcome is Outcome.TRANSPORT_FAILURE or not obs.bindings_used:
        return
    used = sorted({b.edge for b in obs.request.bindings.values()})
    for key in used:
        edge = rpg.consumes_edges.get(key)
        if edge is None or not edge.active:
            continue
        if obs.outcome is Outcome.SUCCESS:
            edge.consecutive_failures = 0
            continue
        edge.consecutive_failures += 1
        if edge.consecutive_failures == cfg.theta:
            _apply(rpg, MarkConsumesInfeasible(key, round), out)


def ingest(rpg: Rpg, obs: Observation, evidence: EquivalenceEvidence, cfg: Optional[FeedbackConfig] = None,
           round: int = 0) -> list:
    """Apply every mutation ``obs`` justifies to ``rpg`` and return them in order.

    Observations of one sequence must arrive in step order so that objects
    from earlier steps are available as evidence.
    """
    cfg = cfg or FeedbackConfig()
    out: list = []
    evidence.remember(obs)
    if not obs.sent:
        return out
    if obs.outcome is Outcome.SUCCESS:
        _scenario_produces(rpg, obs, cfg, out)
        _scenario_equivalence(rpg, obs, evidence, cfg, out)
    _deletion(rpg, obs, cfg, round, out)
    return out


def maybe_reinstate(rpg: Rpg, round: int, cfg: Optional[FeedbackConfig] = None) -> list:
    """Give at most one rested infeasible edge (the oldest) another chance."""
    cfg = cfg or FeedbackConfig()
    eligible = [
        e for e in rpg.consumes_edges.values()
        if not e.active and e.infeasible_since is not None and e.infeasible_since + cfg.reinstate_cooldown <= round
    ]
    if not eligible:
        return []
    oldest = min(eligible, key=lambda e: (e.infeasible_since, e.key))
    m = ReinstateConsumesEdge(oldest.key)
    apply_mutation(rpg, m)
    return [m]
