"""Deciding which schema a response object is an instance of."""

from __future__ import annotations

from typing import Any, Iterator, Mapping, Optional, Union

from .spec_model import PropertyDef, SchemaDef, ServiceSpec

MATCH_MODES = ("all-required-properties", "exact-property-set")


def _type_ok(prop: PropertyDef, value: Any) -> bool:
    if value is None:
        return True
    t = prop.type
    if t == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if t == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if t == "boolean":
        return isinstance(value, bool)
    if t == "string":
        return isinstance(value, str)
    if t == "object-ref":
        return isinstance(value, dict)
    if t == "array-of":
        return isinstance(value, list)
    return True


def object_matches(body: Mapping, sdef: SchemaDef, mode: str = "all-required-properties") -> bool:
    if mode not in MATCH_MODES:
        raise ValueError(f"unknown schema match mode {mode!r}")
    if not isinstance(body, dict) or not body or not sdef.properties:
        return False
    if mode == "exact-property-set":
        if set(body) != set(sdef.properties):
            return False
    else:
        if any(r not in body for r in sdef.required):
            return False
        if not any(k in sdef.properties for k in body):
            return False
    return all(_type_ok(sdef.properties[k], v) for k, v in body.items() if k in sdef.properties)


def _schemas(source: Union[ServiceSpec, Mapping]) -> Mapping[str, SchemaDef]:
    return source.schemas if isinstance(source, ServiceSpec) else source


def match_response_to_schema(body: Any, spec: Union[ServiceSpec, Mapping], mode: str = "all-required-properties") -> Optional[str]:
    """The single schema ``body`` fits, or None when no schema or several fit.

    Arrays match when every element fits the same single schema.
    """
    schemas = _schemas(spec)
    if isinstance(body, list):
        first = None
        for el in body:
            name = match_response_to_schema(el, schemas, mode)
            if name is None or (first is not None and name != first):
                return None
            first = name
        return first
    hits = [name for name in sorted(schemas) if object_matches(body, schemas[name], mode)]
    return hits[0] if len(hits) == 1 else None


def classify_object(obj: Any, documented: list, schemas: Mapping[str, SchemaDef], mode: str) -> Optional[str]:
    """Prefer the operation's documented schemas, fall back to a unique global match."""
    if not isinstance(obj, dict) or not obj:
        return None
    fitting = [s for s in documented if s in schemas and object_matches(obj, schemas[s], mode)]
    if len(fitting) == 1:
        return fitting[0]
    if len(documented) == 1 and documented[0] in schemas:
        props = schemas[documented[0]].properties
        if props and any(k in props for k in obj):
            return documented[0]
    return match_response_to_schema(obj, schemas, mode)


def objects_in_response(rpg, op: str, body: Any, mode: str = "all-required-properties") -> Iterator[tuple]:
    """Yield (element index or None, object, schema name or None) for a response body."""
    schemas = {name: node.properties_attr for name, node in rpg.schema_nodes.items()}
    documented = rpg.produced_by(op) if op in rpg.operation_nodes else []
    if isinstance(body, list):
        for i, el in enumerate(body):
            if isinstance(el, dict):
                yield i, el, classify_object(el, documented, schemas, mode)
    elif isinstance(body, dict):
        yield None, body, classify_object(body, documented, schemas, mode)
