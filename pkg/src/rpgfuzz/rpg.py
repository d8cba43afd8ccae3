"""The RESTful-service property graph.

Two node families (schemas, operations) and four edge families:

* produces   operation -> schema   (the operation returns objects of the schema)
* consumes   schema -> operation   (labelled with property -> parameter bindings)
* equivalence  schema -- schema    (labelled with equivalent property pairs once confirmed)
* endpoint   operation -- operation  (both live under the same path template)

The graph is mutated only through :func:`apply_mutation`; node sets never change
after :func:`build_initial_rpg`.
"""

from __future__ import annotations

import copy
import enum
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .errors import EmptySpecError, InvalidMutationError, UnknownNodeError, UnknownSchemaError
from .spec_model import CrudKind, OperationDef, SchemaDef, ServiceSpec, crud_kind

Label = tuple  # tuple of (schema_property, operation_parameter) pairs, sorted
ConsumesKey = tuple  # (schema, operation, label)


class EdgeStatus(str, enum.Enum):
    ACTIVE = "active"
    INFEASIBLE = "infeasible"


class EquivalenceState(str, enum.Enum):
    CANDIDATE = "candidate"
    CONFIRMED = "confirmed"


@dataclass(frozen=True)
class SchemaNode:
    schema_name: str
    properties_attr: SchemaDef


@dataclass(frozen=True)
class OperationNode:
    operation_id: str
    crud: CrudKind
    path: str
    attrs: OperationDef


@dataclass(frozen=True)
class ProducesEdge:
    operation: str
    schema: str
    origin: str = "spec"


@dataclass
class ConsumesEdge:
    schema: str
    operation: str
    label: Label
    status: EdgeStatus = EdgeStatus.ACTIVE
    consecutive_failures: int = 0
    infeasible_since: Optional[int] = None
    origin: str = "spec"

    @property
    def key(self) -> ConsumesKey:
        return (self.schema, self.operation, self.label)

    @property
    def active(self) -> bool:
        return self.status is EdgeStatus.ACTIVE


@dataclass
class EquivalenceEdge:
    schemas: tuple  # sorted pair
    state: EquivalenceState = EquivalenceState.CANDIDATE
    label: tuple = ()  # tuples (property of schemas[0], property of schemas[1])

    def properties_for(self, schema: str) -> list[tuple[str, str]]:
        """Label tuples oriented as (property of ``schema``, property of the other schema)."""
        if schema == self.schemas[0]:
            return list(self.label)
        return [(b, a) for a, b in self.label]

    def other(self, schema: str) -> str:
        return self.schemas[1] if schema == self.schemas[0] else self.schemas[0]


def make_label(pairs: Iterable) -> Label:
    return tuple(sorted({(str(a), str(b)) for a, b in pairs}))


def _mutation_label(pairs) -> Label:
    try:
        return make_label(pairs)
    except (TypeError, ValueError):
        raise InvalidMutationError(f"label must be a sequence of pairs, got {pairs!r}") from None


def _pair(a: str, b: str) -> tuple:
    return (a, b) if a <= b else (b, a)


# -- mutations ---------------------------------------------------------------


@dataclass(frozen=True)
class AddProducesEdge:
    operation: str
    schema: str
    kind = "AddProducesEdge"

    def edge(self):
        return {"operation": self.operation, "schema": self.schema}


@dataclass(frozen=True)
class AddConsumesEdge:
    schema: str
    operation: str
    label: Label
    kind = "AddConsumesEdge"

    def edge(self):
        return {"schema": self.schema, "operation": self.operation, "label": [list(p) for p in self.label]}


@dataclass(frozen=True)
class ConfirmEquivalence:
    schemas: tuple
    tuples: tuple
    kind = "ConfirmEquivalence"

    def edge(self):
        return {"schemas": list(self.schemas), "label": [list(t) for t in self.tuples]}


@dataclass(frozen=True)
class MarkConsumesInfeasible:
    edge_key: ConsumesKey
    round: int = 0
    kind = "MarkConsumesInfeasible"

    def edge(self):
        s, o, label = self.edge_key
        return {"schema": s, "operation": o, "label": [list(p) for p in label]}


@dataclass(frozen=True)
class ReinstateConsumesEdge:
    edge_key: ConsumesKey
    kind = "ReinstateConsumesEdge"

    def edge(self):
        s, o, label = self.edge_key
        return {"schema": s, "operation": o, "label": [list(p) for p in label]}


RpgMutation = Union[AddProducesEdge, AddConsumesEdge, ConfirmEquivalence, MarkConsumesInfeasible, ReinstateConsumesEdge]
MUTATION_KINDS = ("AddProducesEdge", "AddConsumesEdge", "ConfirmEquivalence", "MarkConsumesInfeasible", "ReinstateConsumesEdge")


# -- graph -------------------------------------------------------------------


@dataclass
class Rpg:
    schema_nodes: dict = field(default_factory=dict)
    operation_nodes: dict = field(default_factory=dict)
    produces_edges: dict = field(default_factory=dict)  # (operation, schema) -> ProducesEdge
    consumes_edges: dict = field(default_factory=dict)  # ConsumesKey -> ConsumesEdge
    equivalence_edges: dict = field(default_factory=dict)  # sorted pair -> EquivalenceEdge
    endpoint_edges: set = field(default_factory=set)  # sorted operation pairs

    # construction helpers; used by build_initial_rpg and by tests that need hand-made graphs

    def add_schema(self, name: str, sdef: Optional[SchemaDef] = None) -> SchemaNode:
        node = SchemaNode(name, sdef if sdef is not None else SchemaDef(name=name))
        self.schema_nodes[name] = node
        return node

    def add_operation(self, op_id: str, crud: CrudKind, path: str = "/", attrs: Optional[OperationDef] = None):
        if attrs is None:
            method = {v: k for k, v in _CRUD_METHOD.items()}[crud]
            attrs = OperationDef(operation_id=op_id, method=method, path=path)
        node = OperationNode(op_id, crud, path, attrs)
        self.operation_nodes[op_id] = node
        return node

    def add_produces(self, op: str, schema: str, origin: str = "spec") -> ProducesEdge:
        self._require_op(op)
        self._require_schema(schema)
        edge = self.produces_edges.get((op, schema))
        if edge is None:
            edge = self.produces_edges[(op, schema)] = ProducesEdge(op, schema, origin)
        return edge

    def add_consumes(self, schema: str, op: str, label: Iterable, origin: str = "spec") -> ConsumesEdge:
        self._require_schema(schema)
        self._require_op(op)
        label = make_label(label)
        if not label:
            raise InvalidMutationError(f"consumes edge {schema}->{op} needs a nonempty label")
        key = (schema, op, label)
        edge = self.consumes_edges.get(key)
        if edge is None:
            edge = self.consumes_edges[key] = ConsumesEdge(schema, op, label, origin=origin)
        return edge

    def add_equivalence(self, a: str, b: str) -> EquivalenceEdge:
        if a == b:
            raise InvalidMutationError(f"equivalence edge needs two distinct schemas, got {a!r} twice")
        self._require_schema(a)
        self._require_schema(b)
        pair = _pair(a, b)
        edge = self.equivalence_edges.get(pair)
        if edge is None:
            edge = self.equivalence_edges[pair] = EquivalenceEdge(pair)
        return edge

    def add_endpoint(self, a: str, b: str) -> None:
        self._require_op(a)
        self._require_op(b)
        if a != b:
            self.endpoint_edges.add(_pair(a, b))

    def _require_schema(self, name: str) -> None:
        if name not in self.schema_nodes:
            raise UnknownSchemaError(name)

    def _require_op(self, op: str) -> None:
        if op not in self.operation_nodes:
            raise UnknownNodeError(op)

    # queries

    def producers_of(self, schema: str) -> set[str]:
        self._require_schema(schema)
        return {op for (op, s) in self.produces_edges if s == schema}

    def consumers_of(self, schema: str) -> set[str]:
        self._require_schema(schema)
        return {e.operation for e in self.consumes_edges.values() if e.schema == schema and e.active}

    def equivalence_neighbors(self, schema: str, state_filter: str = "any") -> set[str]:
        self._require_schema(schema)
        out = set()
        for pair, edge in self.equivalence_edges.items():
            if schema not in pair:
                continue
            if state_filter == "confirmed" and edge.state is not EquivalenceState.CONFIRMED:
                continue
            out.add(edge.other(schema))
        return out

    def equivalence(self, a: str, b: str) -> Optional[EquivalenceEdge]:
        return self.equivalence_edges.get(_pair(a, b))

    def produced_by(self, op: str) -> list[str]:
        return sorted(s for (o, s) in self.produces_edges if o == op)

    def consumes_into(self, op: str, active_only: bool = True) -> list[ConsumesEdge]:
        return [
            self.consumes_edges[k]
            for k in sorted(self.consumes_edges)
            if k[1] == op and (self.consumes_edges[k].active or not active_only)
        ]

    def schemas_of_operation(self, op: str) -> set[str]:
        """Schemas an operation touches through produces or active consumes edges."""
        touched = {s for (o, s) in self.produces_edges if o == op}
        touched.update(e.schema for e in self.consumes_edges.values() if e.operation == op and e.active)
        return touched

    def crud(self, op: str) -> CrudKind:
        return self.operation_nodes[op].crud

    def copy(self) -> "Rpg":
        return copy.deepcopy(self)

    # well-formedness

    def validate(self) -> list[str]:
        problems = []
        for (op, s) in self.produces_edges:
            if op not in self.operation_nodes or s not in self.schema_nodes:
                problems.append(f"dangling produces edge {op}->{s}")
        for key, e in self.consumes_edges.items():
            if e.schema not in self.schema_nodes or e.operation not in self.operation_nodes:
                problems.append(f"dangling consumes edge {key}")
                continue
            if not e.label:
                problems.append(f"empty label on consumes edge {key}")
            sdef = self.schema_nodes[e.schema].properties_attr
            attrs = self.operation_nodes[e.operation].attrs
            for prop, param in e.label:
                if sdef.properties and prop not in sdef.properties:
                    problems.append(f"{key}: {e.schema} has no property {prop!r}")
                if attrs.parameters and attrs.parameter(param) is None:
                    problems.append(f"{key}: {e.operation} has no parameter {param!r}")
        for pair, e in self.equivalence_edges.items():
            a, b = pair
            if a == b:
                problems.append(f"self-loop equivalence edge on {a}")
            if a not in self.schema_nodes or b not in self.schema_nodes:
                problems.append(f"dangling equivalence edge {pair}")
            if e.state is EquivalenceState.CONFIRMED and not e.label:
                problems.append(f"confirmed equivalence {pair} without label")
            if e.state is EquivalenceState.CANDIDATE and e.label:
                problems.append(f"candidate equivalence {pair} carries a label")
        for a, b in self.endpoint_edges:
            if a not in self.operation_nodes or b not in self.operation_nodes:
                problems.append(f"dangling endpoint edge {a}--{b}")
            elif self.operation_nodes[a].path != self.operation_nodes[b].path:
                problems.append(f"endpoint edge {a}--{b} joins different paths")
        return problems

    # export

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "schemas": [
                {"name": n, "properties": sorted(node.properties_attr.properties)}
                for n, node in sorted(self.schema_nodes.items())
            ],
            "operations": [
                {"operation_id": o, "crud": node.crud.value, "path": node.path}
                for o, node in sorted(self.operation_nodes.items())
            ],
            "produces": [
                {"operation": e.operation, "schema": e.schema, "origin": e.origin}
                for _, e in sorted(self.produces_edges.items())
            ],
            "consumes": [
                {
                    "schema": e.schema,
                    "operation": e.operation,
                    "label": [list(p) for p in e.label],
                    "status": e.status.value,
                    "consecutive_failures": e.consecutive_failures,
                    "origin": e.origin,
                }
                for _, e in sorted(self.consumes_edges.items())
            ],
            "equivalences": [
                {"schemas": list(pair), "state": e.state.value, "label": [list(t) for t in e.label]}
                for pair, e in sorted(self.equivalence_edges.items())
            ],
            "endpoints": [list(p) for p in sorted(self.endpoint_edges)],
        }

    def to_dot(self) -> str:
        lines = ["digraph rpg {", "  rankdir=LR;"]
        for name in sorted(self.schema_nodes):
            lines.append(f'  "s:{name}" [label="{name}", shape=box];')
        for op in sorted(self.operation_nodes):
            lines.append(f'  "o:{op}" [label="{op}", shape=ellipse];')
        for (op, s), e in sorted(self.produces_edges.items()):
            style = ', style=bold' if e.origin == "inferred" else ""
            lines.append(f'  "o:{op}" -> "s:{s}" [color=blue{style}];')
        for key, e in sorted(self.consumes_edges.items()):
            label = ", ".join(f"{a}->{b}" for a, b in e.label)
            color = "red" if not e.active else "black"
            lines.append(f'  "s:{e.schema}" -> "o:{e.operation}" [label="{label}", color={color}];')
        for pair, e in sorted(self.equivalence_edges.items()):
            label = ", ".join(f"{a}={b}" for a, b in e.label)
            style = "dashed" if e.state is EquivalenceState.CONFIRMED else "dotted"
            lines.append(f'  "s:{pair[0]}" -> "s:{pair[1]}" [dir=none, style={style}, label="{label}"];')
        for a, b in sorted(self.endpoint_edges):
            lines.append(f'  "o:{a}" -> "o:{b}" [dir=none, color=gray];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


_CRUD_METHOD = {"POST": CrudKind.CREATE, "GET": CrudKind.READ, "PUT": CrudKind.UPDATE, "DELETE": CrudKind.DELETE}


# -- construction ------------------------------------------------------------


def _dependency_slots(op: OperationDef, crud: CrudKind) -> list[str]:
    # a Create body describes the new resource, so its fields never consume existing objects
    slots = [p.name for p in op.parameters if p.location in ("path", "query")]
    if crud is not CrudKind.CREATE:
        slots += [p.name for p in op.parameters if p.location == "body-field"]
    return slots


def _match_slot(slot: str, schemas: dict) -> list[tuple[str, str]]:
    """(schema, property) pairs a parameter name refers to.

    Exact case-insensitive property-name matches win; only when there is none
    anywhere does ``<schema>Id`` resolve to that schema's ``id`` property.
    """
    want = slot.lower()
    exact = [
        (sname, prop)
        for sname, sdef in schemas.items()
        for prop in sdef.properties
        if prop.lower() == want
    ]
    if exact:
        return exact
    return [
        (sname, prop)
        for sname, sdef in schemas.items()
        for prop in sdef.properties
        if prop.lower() == "id" and want == f"{sname.lower()}id"
    ]


def build_initial_rpg(spec: ServiceSpec) -> Rpg:
    ops = spec.supported_operations()
    if not ops:
        raise EmptySpecError("specification declares no supported operations")

    rpg = Rpg()
    for name, sdef in spec.schemas.items():
        rpg.add_schema(name, sdef)
    for op in ops:
        rpg.add_operation(op.operation_id, crud_kind(op), op.path, op)

    for op in ops:
        for schema in op.success_schemas():
            if schema in rpg.schema_nodes:
                rpg.add_produces(op.operation_id, schema, origin="spec")

    for op in ops:
        crud = crud_kind(op)
        by_schema: dict[str, list] = {}
        for slot in _dependency_slots(op, crud):
            for sname, prop in _match_slot(slot, spec.schemas):
                by_schema.setdefault(sname, []).append((prop, slot))
        for sname in sorted(by_schema):
            rpg.add_consumes(sname, op.operation_id, by_schema[sname])
        body = op.request_body_schema
        if body and crud is not CrudKind.CREATE and not spec.schemas[body].synthetic:
            props = spec.schemas[body].properties
            if props and op.request_body.type == "object-ref":
                rpg.add_consumes(body, op.operation_id, [(p, p) for p in props])

    by_path: dict[str, list[str]] = {}
    for op in ops:
        by_path.setdefault(op.path, []).append(op.operation_id)
    for members in by_path.values():
        for a, b in itertools.combinations(members, 2):
            rpg.add_endpoint(a, b)

    for op in ops:
        touched = sorted(rpg.schemas_of_operation(op.operation_id))
        for a, b in itertools.combinations(touched, 2):
            rpg.add_equivalence(a, b)
    return rpg


# -- mutation ----------------------------------------------------------------


def _check_label(rpg: Rpg, schema: str, op: str, label: Label) -> None:
    if not label:
        raise InvalidMutationError(f"empty label for {schema}->{op}")
    sdef = rpg.schema_nodes[schema].properties_attr
    attrs = rpg.operation_nodes[op].attrs
    for prop, param in label:
        if sdef.properties and prop not in sdef.properties:
            raise InvalidMutationError(f"{schema} has no property {prop!r}")
        if attrs.parameters and attrs.parameter(param) is None:
            raise InvalidMutationError(f"{op} has no parameter {param!r}")


def apply_mutation(rpg: Rpg, m: RpgMutation) -> Rpg:
    """Apply ``m`` in place and return the graph; on error nothing changes."""
    if isinstance(m, AddProducesEdge):
        rpg._require_op(m.operation)
        rpg._require_schema(m.schema)
        rpg.add_produces(m.operation, m.schema, origin="inferred")
    elif isinstance(m, AddConsumesEdge):
        rpg._require_schema(m.schema)
        rpg._require_op(m.operation)
        label = _mutation_label(m.label)
        _check_label(rpg, m.schema, m.operation, label)
        rpg.add_consumes(m.schema, m.operation, label, origin="inferred")
    elif isinstance(m, ConfirmEquivalence):
        a, b = m.schemas
        rpg._require_schema(a)
        rpg._require_schema(b)
        edge = rpg.equivalence(a, b)
        if edge is None:
            raise InvalidMutationError(f"no candidate equivalence between {a} and {b}")
        if not m.tuples:
            raise InvalidMutationError("confirmation needs at least one property pair")
        tuples = _mutation_label(m.tuples)
        oriented = tuples if (a, b) == edge.schemas else tuple((y, x) for x, y in tuples)
        sa = rpg.schema_nodes[edge.schemas[0]].properties_attr
        sb = rpg.schema_nodes[edge.schemas[1]].properties_attr
        for pa, pb in oriented:
            if (sa.properties and pa not in sa.properties) or (sb.properties and pb not in sb.properties):
                raise InvalidMutationError(f"unknown property in tuple ({pa}, {pb})")
        edge.label = tuple(sorted(set(edge.label) | set(oriented)))
        edge.state = EquivalenceState.CONFIRMED
    elif isinstance(m, MarkConsumesInfeasible):
        edge = rpg.consumes_edges.get(m.edge_key)
        if edge is None:
            raise InvalidMutationError(f"no consumes edge {m.edge_key}")
        if edge.active:
            edge.status = EdgeStatus.INFEASIBLE
            edge.infeasible_since = m.round
    elif isinstance(m, ReinstateConsumesEdge):
        edge = rpg.consumes_edges.get(m.edge_key)
        if edge is None:
            raise InvalidMutationError(f"no consumes edge {m.edge_key}")
        edge.status = EdgeStatus.ACTIVE
        edge.consecutive_failures = 0
        edge.infeasible_since = None
    else:
        raise InvalidMutationError(f"unknown mutation {m!r}")
    return rpg


def mutation_record(m: RpgMutation, round: int, observation: Optional[str]) -> dict:
    return {"kind": m.kind, "edge": m.edge(), "round": round, "observation": observation}
