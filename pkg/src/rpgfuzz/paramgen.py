"""Turn one abstract step of a call sequence into a concrete HTTP request.

Values are chosen per parameter, in priority order: a value lifted from an
earlier response in the same sequence (following consumes-edge labels and
confirmed equivalences), the operation's last successful value, a value from
the declared enum or range, and finally a random value of the right type.
"""

from __future__ import annotations

import copy
import math
import random
import re
import string
from dataclasses import dataclass, field
from typing import Any, Optional
from urllib.parse import quote, urlencode

from .errors import UnboundRequiredPathParamError
from .matching import objects_in_response
from .rpg import ConsumesKey, EquivalenceState, Rpg
from .spec_model import ParameterDef, PropertyDef, SchemaDef, ServiceSpec

_ALNUM = string.ascii_letters + string.digits
_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")
_OMIT = object()


@dataclass
class ValuePool:
    """Cross-sequence memory: the last 2xx assignment of each operation, plus the RNG."""

    seed: int = 0
    last_success: dict = field(default_factory=dict)
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = random.Random(f"pool:{self.seed}")

    def record_success(self, request: "ConcreteRequest") -> None:
        self.last_success[request.operation_id] = {
            "params": copy.deepcopy(request.assignment),
            "body": copy.deepcopy(request.body),
        }


@dataclass
class ResponseRecord:
    step: int
    operation_id: str
    body: Any


@dataclass
class BindingContext:
    prior_responses: list = field(default_factory=list)

    def add(self, step: int, operation_id: str, body: Any) -> None:
        self.prior_responses.append(ResponseRecord(step, operation_id, body))

    def record(self, step: int) -> Optional[ResponseRecord]:
        for rec in self.prior_responses:
            if rec.step == step:
                return rec
        return None


@dataclass(frozen=True)
class Binding:
    parameter: str
    value: Any
    step: int
    element: Optional[int]
    schema: str
    property: str
    edge: ConsumesKey

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "step": self.step,
            "element": self.element,
            "schema": self.schema,
            "property": self.property,
            "edge": [self.edge[0], self.edge[1], [list(p) for p in self.edge[2]]],
        }


@dataclass
class ConcreteRequest:
    method: str
    url: str
    query: dict = field(default_factory=dict)
    body: Any = None
    headers: dict = field(default_factory=dict)
    operation_id: str = ""
    assignment: dict = field(default_factory=dict)
    bindings: dict = field(default_factory=dict)

    @property
    def bindings_used(self) -> bool:
        return bool(self.bindings)

    def replay_fields(self) -> dict:
        return {"method": self.method, "url": self.url, "headers": dict(self.headers), "body": self.body}


@dataclass
class StrategyConfig:
    p_reuse: float = 0.8
    p_spec: float = 0.8
    depth_limit: int = 3
    use_bindings: bool = True
    match_mode: str = "all-required-properties"
    optional_param_rate: float = 0.5

    def __post_init__(self):
        for name in ("p_reuse", "p_spec", "optional_param_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.depth_limit < 0:
            raise ValueError("depth_limit must be >= 0")


# -- binding from earlier responses -----------------------------------------


def bind_from_response(op: str, rpg: Rpg, ctx: BindingContext, mode: str = "all-required-properties") -> dict:
    edges = rpg.consumes_into(op)
    if not edges or not ctx.prior_responses:
        return {}
    wanted = {param for e in edges for _, param in e.label}
    found: dict[str, Binding] = {}
    for rec in reversed(ctx.prior_responses):
        if len(found) == len(wanted):
            break
        for element, obj, schema in objects_in_response(rpg, rec.operation_id, rec.body, mode):
            if schema is None:
                continue
            for e in edges:
                for prop, param in e.label:
                    if param in found:
                        continue
                    source = _source_property(rpg, schema, e.schema, prop)
                    if source is None or obj.get(source) is None:
                        continue
                    found[param] = Binding(param, obj[source], rec.step, element, schema, source, e.key)
    return found


def _source_property(rpg: Rpg, obj_schema: str, edge_schema: str, prop: str) -> Optional[str]:
    if obj_schema == edge_schema:
        return prop
    eq = rpg.equivalence(obj_schema, edge_schema)
    if eq is None or eq.state is not EquivalenceState.CONFIRMED:
        return None
    for p_edge, p_obj in eq.properties_for(edge_schema):
        if p_edge == prop:
            return p_obj
    return None


# -- value generation --------------------------------------------------------


def _random_string(rng: random.Random, lo: int = 1, hi: int = 16) -> str:
    return "".join(rng.choice(_ALNUM) for _ in range(rng.randint(lo, hi)))


def random_scalar(prop: PropertyDef, rng: random.Random, kind: Optional[str] = None) -> Any:
    kind = kind or prop.type
    if kind == "integer":
        return rng.randint(0, 1000)
    if kind == "number":
        return round(rng.uniform(0, 1000), 3)
    if kind == "boolean":
        return rng.random() < 0.5
    return _random_string(rng)


def constrained_scalar(prop: PropertyDef, rng: random.Random, kind: Optional[str] = None) -> Any:
    kind = kind or prop.type
    if prop.enum_values is not None:
        return rng.choice(list(prop.enum_values))
    if kind in ("integer", "number"):
        lo, hi = prop.minimum, prop.maximum
        if lo is None and hi is None:
            return random_scalar(prop, rng, kind)
        if lo is None:
            lo = hi - 1000
        if hi is None:
            hi = lo + 1000
        if kind == "integer":
            lo_i, hi_i = math.ceil(lo), math.floor(hi)
            return rng.randint(lo_i, hi_i) if lo_i <= hi_i else lo_i
        return round(rng.uniform(lo, hi), 3)
    if kind == "string" and (prop.min_length is not None or prop.max_length is not None):
        lo = prop.min_length or 0
        hi = prop.max_length if prop.max_length is not None else max(lo, 16)
        return "".join(rng.choice(_ALNUM) for _ in range(rng.randint(lo, max(lo, hi))))
    return random_scalar(prop, rng, kind)


def _scalar(prop: PropertyDef, pool: ValuePool, strategy: StrategyConfig, kind: Optional[str] = None) -> Any:
    if prop.has_constraints and pool.rng.random() < strategy.p_spec:
        return constrained_scalar(prop, pool.rng, kind)
    return random_scalar(prop, pool.rng, kind)


def value_for_property(prop: PropertyDef, spec: ServiceSpec, pool: ValuePool, depth_limit: int,
                       strategy: Optional[StrategyConfig] = None) -> Any:
    strategy = strategy or StrategyConfig()
    if prop.type == "object-ref":
        if prop.nested is None:
            return {}
        if depth_limit <= 0:
            return _OMIT
        return value_for_schema(spec.schemas[prop.nested], spec, pool, depth_limit - 1, strategy)
    if prop.type == "array-of":
        if depth_limit <= 0:
            return []
        items = []
        for _ in range(pool.rng.randint(1, 2)):
            if prop.nested is not None:
                items.append(value_for_schema(spec.schemas[prop.nested], spec, pool, depth_limit - 1, strategy))
            else:
                items.append(_scalar(prop, pool, strategy, kind=prop.items_type or "string"))
        return items
    return _scalar(prop, pool, strategy)


def value_for_schema(s: SchemaDef, spec: ServiceSpec, pool: ValuePool, depth_limit: int,
                     strategy: Optional[StrategyConfig] = None) -> dict:
    """Build an object for ``s``; nested objects stop appearing once ``depth_limit`` runs out."""
    out = {}
    for name, prop in s.properties.items():
        value = value_for_property(prop, spec, pool, depth_limit, strategy)
        if value is not _OMIT:
            out[name] = value
    return out


def _param_value(p: ParameterDef, binding: Optional[Binding], last: Optional[dict], spec: ServiceSpec,
                 pool: ValuePool, strategy: StrategyConfig) -> Any:
    if binding is not None:
        return copy.deepcopy(binding.value)
    if last is not None and p.name in last["params"] and pool.rng.random() < strategy.p_reuse:
        return copy.deepcopy(last["params"][p.name])
    value = value_for_property(p.schema, spec, pool, strategy.depth_limit, strategy)
    return None if value is _OMIT else value


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def next_request(op: str, rpg: Rpg, spec: ServiceSpec, ctx: BindingContext, pool: ValuePool,
                 strategy: Optional[StrategyConfig] = None) -> ConcreteRequest:
    strategy = strategy or StrategyConfig()
    opdef = spec.operation(op)
    bindings = bind_from_response(op, rpg, ctx, strategy.match_mode) if strategy.use_bindings else {}
    last = pool.last_success.get(op)

    assignment: dict[str, Any] = {}
    for p in opdef.parameters:
        if p.location == "body-field":
            continue
        if not p.required and p.name not in bindings and pool.rng.random() >= strategy.optional_param_rate:
            continue
        assignment[p.name] = _param_value(p, bindings.get(p.name), last, spec, pool, strategy)

    body: Any = None
    rb = opdef.request_body
    if rb is not None:
        if rb.type == "object-ref" and rb.nested is not None:
            body = {}
            for p in opdef.params_in("body-field"):
                if not p.required and p.name not in bindings and pool.rng.random() >= strategy.optional_param_rate:
                    continue
                value = _param_value(p, bindings.get(p.name), last, spec, pool, strategy)
                if value is not None:
                    body[p.name] = value
                    assignment[p.name] = value
        elif last is not None and last["body"] is not None and pool.rng.random() < strategy.p_reuse:
            body = copy.deepcopy(last["body"])
        else:
            body = value_for_property(rb, spec, pool, strategy.depth_limit, strategy)
            if body is _OMIT:
                body = {}

    path = opdef.path
    for p in opdef.params_in("path"):
        value = assignment.get(p.name)
        if value is None or isinstance(value, (dict, list)):
            raise UnboundRequiredPathParamError(op, p.name)
        path = path.replace("{" + p.name + "}", quote(_render(value), safe=""))
    leftover = _PLACEHOLDER.search(path)
    if leftover:
        raise UnboundRequiredPathParamError(op, leftover.group(1))

    query = {p.name: assignment[p.name] for p in opdef.params_in("query") if p.name in assignment}
    url = (spec.base_path or "") + path
    if query:
        pairs = []
        for name, value in query.items():
            if isinstance(value, list):
                pairs.extend((name, _render(v)) for v in value)
            else:
                pairs.append((name, _render(value)))
        url += "?" + urlencode(pairs)

    headers = {"Content-Type": "application/json"} if body is not None else {}
    used = {name: b for name, b in bindings.items() if name in assignment}
    return ConcreteRequest(
        method=opdef.method,
        url=url,
        query=query,
        body=body,
        headers=headers,
        operation_id=op,
        assignment=assignment,
        bindings=used,
    )
