"""OpenAPI 2.x/3.x ingestion.

``parse_spec`` turns a YAML or JSON document into a :class:`ServiceSpec`, a
reference-resolved view in which every object schema has a name (anonymous
inline objects get synthetic ones) and every operation lists its inputs as
flat ``path`` / ``query`` / ``body-field`` parameters.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional
from urllib.parse import urlparse

import yaml

from .errors import ParseError, UnresolvedRefError, UnsupportedMethodError, UnsupportedVersionError

SCALAR_TYPES = ("string", "integer", "number", "boolean")
PROPERTY_TYPES = SCALAR_TYPES + ("object-ref", "array-of")
LOCATIONS = ("path", "query", "body-field")
HTTP_METHODS = ("get", "put", "post", "delete", "patch", "head", "options", "trace")


class CrudKind(str, enum.Enum):
    CREATE = "Create"
    READ = "Read"
    UPDATE = "Update"
    DELETE = "Delete"


_METHOD_TO_CRUD = {
    "POST": CrudKind.CREATE,
    "GET": CrudKind.READ,
    "PUT": CrudKind.UPDATE,
    "DELETE": CrudKind.DELETE,
}
SUPPORTED_METHODS = tuple(_METHOD_TO_CRUD)


@dataclass(frozen=True)
class PropertyDef:
    """Type of a schema property, parameter or body.

    ``nested`` names the referenced schema for ``object-ref`` and ``array-of``
    (``None`` for a free-form object or an array of scalars, in which case
    ``items_type`` carries the scalar item type).
    """

    name: str
    type: str
    enum_values: Optional[tuple] = None
    nested: Optional[str] = None
    items_type: Optional[str] = None
    minimum: Optional[float] = None
    maximum: Optional[float] = None
    min_length: Optional[int] = None
    max_length: Optional[int] = None
    format: Optional[str] = None

    def __post_init__(self):
        if self.type not in PROPERTY_TYPES:
            raise ValueError(f"unknown property type {self.type!r}")
        if self.enum_values is not None and len(self.enum_values) == 0:
            raise ValueError(f"{self.name}: enum_values must be nonempty when present")

    @property
    def has_constraints(self) -> bool:
        return (
            self.enum_values is not None
            or self.minimum is not None
            or self.maximum is not None
            or self.min_length is not None
            or self.max_length is not None
        )


@dataclass(frozen=True)
class SchemaDef:
    name: str
    properties: dict = field(default_factory=dict)
    required: tuple = ()
    synthetic: bool = False


@dataclass(frozen=True)
class ParameterDef:
    name: str
    location: str
    schema: PropertyDef
    required: bool = False

    def __post_init__(self):
        if self.location not in LOCATIONS:
            raise ValueError(f"unknown parameter location {self.location!r}")
        if self.location == "path" and not self.required:
            object.__setattr__(self, "required", True)


@dataclass(frozen=True)
class OperationDef:
    operation_id: str
    method: str
    path: str
    parameters: tuple = ()
    request_body: Optional[PropertyDef] = None
    responses: dict = field(default_factory=dict)

    @property
    def supported(self) -> bool:
        return self.method in _METHOD_TO_CRUD

    @property
    def request_body_schema(self) -> Optional[str]:
        if self.request_body is None:
            return None
        return self.request_body.nested

    def params_in(self, location: str) -> list[ParameterDef]:
        return [p for p in self.parameters if p.location == location]

    def parameter(self, name: str) -> Optional[ParameterDef]:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def success_schemas(self) -> list[str]:
        """Schema names referenced by documented 2xx responses, in code order."""
        names = []
        for code, schema in sorted(self.responses.items()):
            if schema and code[:1] == "2" and schema not in names:
                names.append(schema)
        return names


@dataclass(frozen=True)
class EndpointDef:
    path: str
    operations: tuple = ()


@dataclass
class ServiceSpec:
    title: str
    version: str
    base_path: str
    endpoints: list
    schemas: dict
    diagnostics: list = field(default_factory=list, compare=False)

    def operations(self) -> Iterator[OperationDef]:
        for ep in self.endpoints:
            yield from ep.operations

    def supported_operations(self) -> list[OperationDef]:
        return [op for op in self.operations() if op.supported]

    def operation(self, operation_id: str) -> OperationDef:
        for op in self.operations():
            if op.operation_id == operation_id:
                return op
        raise KeyError(operation_id)


def crud_kind(op: OperationDef) -> CrudKind:
    try:
        return _METHOD_TO_CRUD[op.method]
    except KeyError:
        raise UnsupportedMethodError(f"{op.operation_id}: {op.method} has no CRUD mapping") from None


def load_spec(path) -> ServiceSpec:
    """Read and parse a spec file; ``-`` reads stdin."""
    if str(path) == "-":
        import sys

        return parse_spec(sys.stdin.read(), "auto")
    p = Path(path)
    fmt = "json" if p.suffix.lower() == ".json" else "yaml"
    return parse_spec(p.read_text(encoding="utf-8"), fmt)


def parse_spec(document: str, format: str = "auto") -> ServiceSpec:
    if format not in ("yaml", "json", "auto"):
        raise ValueError(f"unknown format {format!r}")
    if format == "auto":
        format = "json" if document.lstrip().startswith("{") else "yaml"
    try:
        data = json.loads(document) if format == "json" else yaml.safe_load(document)
    except (ValueError, yaml.YAMLError) as exc:
        raise ParseError(f"malformed {format} document: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("top-level document must be a mapping")
    return _Parser(data).run()


class _Parser:
    def __init__(self, doc: dict):
        self.doc = doc
        self.version = self._detect_version(doc)
        if self.version == 2:
            self.component_schemas = doc.get("definitions") or {}
        else:
            self.component_schemas = (doc.get("components") or {}).get("schemas") or {}
        self.schemas: dict[str, SchemaDef] = {}
        self._building: set[str] = set()
        self._inline_counter = 0
        self.diagnostics: list[str] = []

    @staticmethod
    def _detect_version(doc: dict) -> int:
        if "openapi" in doc:
            if str(doc["openapi"]).startswith("3."):
                return 3
            raise UnsupportedVersionError(f"unsupported openapi version {doc['openapi']!r}")
        if "swagger" in doc:
            if str(doc["swagger"]).startswith("2"):
                return 2
            raise UnsupportedVersionError(f"unsupported swagger version {doc['swagger']!r}")
        raise UnsupportedVersionError("document declares neither 'openapi' nor 'swagger'")

    def run(self) -> ServiceSpec:
        for name in self.component_schemas:
            if self._component_kind(self.component_schemas[name]) == "object":
                self._named_schema(name)

        endpoints = []
        seen_ids: set[str] = set()
        paths = self.doc.get("paths") or {}
        if not isinstance(paths, dict):
            raise ParseError("'paths' must be a mapping")
        for path, item in paths.items():
            if not isinstance(item, dict):
                raise ParseError(f"path item {path!r} must be a mapping")
            item = self._deref(item)
            shared_params = item.get("parameters") or []
            ops = []
            for method in HTTP_METHODS:
                if method not in item:
                    continue
                op = self._operation(path, method.upper(), item[method], shared_params)
                if op.operation_id in seen_ids:
                    raise ParseError(f"duplicate operationId {op.operation_id!r}")
                seen_ids.add(op.operation_id)
                if not op.supported:
                    self.diagnostics.append(
                        f"{op.operation_id}: method {op.method} is outside the CRUD model; excluded from the graph"
                    )
                ops.append(op)
            endpoints.append(EndpointDef(path=str(path), operations=tuple(ops)))

        info = self.doc.get("info") or {}
        return ServiceSpec(
            title=str(info.get("title", "")),
            version=str(info.get("version", "")),
            base_path=self._base_path(),
            endpoints=endpoints,
            schemas=dict(sorted(self.schemas.items())),
            diagnostics=self.diagnostics,
        )

    def _base_path(self) -> str:
        if self.version == 2:
            base = str(self.doc.get("basePath") or "")
        else:
            servers = self.doc.get("servers") or []
            base = urlparse(str(servers[0].get("url", ""))).path if servers else ""
        base = base.rstrip("/")
        if base and not base.startswith("/"):
            base = "/" + base
        return base

    # -- references ------------------------------------------------------

    def _pointer(self, ref: str) -> Any:
        if not isinstance(ref, str) or not ref.startswith("#/"):
            raise UnresolvedRefError(f"only local references are supported: {ref!r}")
        node: Any = self.doc
        for part in ref[2:].split("/"):
            part = part.replace("~1", "/").replace("~0", "~")
            if isinstance(node, dict) and part in node:
                node = node[part]
            elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
                node = node[int(part)]
            else:
                raise UnresolvedRefError(f"dangling reference {ref!r}")
        return node

    def _deref(self, node: Any) -> Any:
        seen = set()
        while isinstance(node, dict) and "$ref" in node:
            ref = node["$ref"]
            if ref in seen:
                raise UnresolvedRefError(f"reference cycle through {ref!r}")
            seen.add(ref)
            node = self._pointer(ref)
        return node

    def _schema_ref_name(self, ref: str) -> Optional[str]:
        prefix = "#/definitions/" if self.version == 2 else "#/components/schemas/"
        if ref.startswith(prefix):
            name = ref[len(prefix):].replace("~1", "/").replace("~0", "~")
            if "/" not in name:
                if name not in self.component_schemas:
                    raise UnresolvedRefError(f"dangling reference {ref!r}")
                return name
        return None

    # -- schemas ---------------------------------------------------------

    @staticmethod
    def _component_kind(raw: Any) -> str:
        if not isinstance(raw, dict):
            return "scalar"
        if "$ref" in raw:
            return "ref"
        t = raw.get("type")
        if t == "array":
            return "array"
        if "properties" in raw or "allOf" in raw or t == "object":
            return "object"
        if "oneOf" in raw or "anyOf" in raw:
            return "object"
        return "scalar"

    def _named_schema(self, name: str) -> None:
        if name in self.schemas or name in self._building:
            return
        self._building.add(name)
        raw = self.component_schemas[name]
        props, required = self._object_members(raw, owner=name)
        self.schemas[name] = SchemaDef(
            name=name, properties=props, required=required, synthetic=bool(raw.get("x-synthetic", False))
        )
        self._building.discard(name)

    def _next_inline_name(self, prefix: str) -> str:
        self._inline_counter += 1
        return f"{prefix}_inline_{self._inline_counter}"

    def _object_members(self, raw: dict, owner: str) -> tuple[dict, tuple]:
        raw = self._flatten(raw, owner)
        props: dict[str, PropertyDef] = {}
        for pname, praw in (raw.get("properties") or {}).items():
            props[str(pname)] = self._prop(str(pname), praw, f"{owner}_{pname}")
        required = tuple(str(r) for r in (raw.get("required") or []) if str(r) in props)
        return props, required

    def _flatten(self, raw: dict, owner: str) -> dict:
        """Collapse allOf (property union) and oneOf/anyOf (first variant)."""
        for key in ("oneOf", "anyOf"):
            if key in raw and raw[key]:
                self.diagnostics.append(f"{owner}: {key} reduced to its first variant")
                merged = {k: v for k, v in raw.items() if k != key}
                first = self._deref(raw[key][0])
                return self._flatten({**merged, **self._flatten(first, owner)}, owner)
        if "allOf" not in raw:
            return raw
        self.diagnostics.append(f"{owner}: allOf flattened into a property union")
        props: dict = {}
        required: list = []
        for part in raw["allOf"]:
            part = self._flatten(self._deref(part), owner)
            props.update(part.get("properties") or {})
            required.extend(part.get("required") or [])
        props.update(raw.get("properties") or {})
        required.extend(raw.get("required") or [])
        return {"type": "object", "properties": props, "required": list(dict.fromkeys(required))}

    def _prop(self, name: str, raw: Any, context: str) -> PropertyDef:
        if not isinstance(raw, dict):
            return PropertyDef(name=name, type="string")
        if "$ref" in raw:
            ref_name = self._schema_ref_name(raw["$ref"])
            target = self._deref(raw)
            if ref_name is not None:
                kind = self._component_kind(target)
                if kind == "object":
                    self._named_schema(ref_name)
                    return PropertyDef(name=name, type="object-ref", nested=ref_name)
                context = ref_name
            return self._prop(name, target, context)
        kind = self._component_kind(raw)
        if kind == "array":
            items = raw.get("items") or {}
            item = self._prop(name, items, context)
            if item.type == "object-ref":
                return PropertyDef(name=name, type="array-of", nested=item.nested)
            if item.type == "array-of":
                # arrays of arrays keep the innermost element type
                return PropertyDef(name=name, type="array-of", nested=item.nested, items_type=item.items_type)
            return PropertyDef(name=name, type="array-of", items_type=item.type, enum_values=item.enum_values)
        if kind == "object":
            flat = self._flatten(raw, context)
            if self._component_kind(flat) != "object":
                # a oneOf/anyOf whose first variant is not an object
                return self._prop(name, flat, context)
            if not flat.get("properties"):
                return PropertyDef(name=name, type="object-ref")
            synthetic = self._next_inline_name(context)
            props, required = self._object_members(flat, owner=synthetic)
            self.schemas[synthetic] = SchemaDef(name=synthetic, properties=props, required=required, synthetic=True)
            return PropertyDef(name=name, type="object-ref", nested=synthetic)
        t = raw.get("type")
        if t not in SCALAR_TYPES:
            t = "string"
        enum_values = raw.get("enum")
        return PropertyDef(
            name=name,
            type=t,
            enum_values=tuple(enum_values) if enum_values else None,
            minimum=raw.get("minimum"),
            maximum=raw.get("maximum"),
            min_length=raw.get("minLength"),
            max_length=raw.get("maxLength"),
            format=raw.get("format"),
        )

    # -- operations ------------------------------------------------------

    def _operation(self, path: str, method: str, raw: Any, shared_params: list) -> OperationDef:
        if not isinstance(raw, dict):
            raise ParseError(f"{method} {path}: operation must be a mapping")
        op_id = raw.get("operationId") or _synthetic_op_id(method, path)
        op_id = str(op_id)

        merged: dict[tuple, dict] = {}
        for p in list(shared_params) + list(raw.get("parameters") or []):
            p = self._deref(p)
            if not isinstance(p, dict) or "name" not in p or "in" not in p:
                raise ParseError(f"{op_id}: malformed parameter {p!r}")
            merged[(p["name"], p["in"])] = p

        params: list[ParameterDef] = []
        form_fields: dict = {}
        form_required: list = []
        body: Optional[PropertyDef] = None
        for (pname, loc), p in merged.items():
            pname = str(pname)
            if loc in ("path", "query"):
                raw_schema = p.get("schema", p) if self.version == 3 else p
                prop = self._prop(pname, raw_schema, f"{op_id}_{loc}")
                params.append(ParameterDef(pname, loc, prop, required=bool(p.get("required", loc == "path"))))
            elif loc == "body":
                body = self._prop("body", p.get("schema") or {}, f"{op_id}_body")
            elif loc == "formData":
                form_fields[pname] = {k: v for k, v in p.items() if k not in ("name", "in", "required")}
                if p.get("required"):
                    form_required.append(pname)
            else:
                self.diagnostics.append(f"{op_id}: {loc} parameter {pname!r} ignored")

        if form_fields and body is None:
            body = self._prop("body", {"type": "object", "properties": form_fields, "required": form_required}, f"{op_id}_body")

        if self.version == 3 and raw.get("requestBody") is not None:
            rb = self._deref(raw["requestBody"])
            schema = _pick_content_schema(rb.get("content") or {})
            if schema is not None:
                body = self._prop("body", schema, f"{op_id}_body")

        if body is not None and body.type == "object-ref" and body.nested:
            sdef = self.schemas[body.nested]
            for fname, fprop in sdef.properties.items():
                params.append(ParameterDef(fname, "body-field", fprop, required=fname in sdef.required))

        responses: dict[str, Optional[str]] = {}
        for code, resp in (raw.get("responses") or {}).items():
            resp = self._deref(resp) or {}
            if self.version == 3:
                schema = _pick_content_schema(resp.get("content") or {})
            else:
                schema = resp.get("schema")
            target = None
            if schema is not None:
                prop = self._prop("response", schema, f"{op_id}_response")
                if prop.type in ("object-ref", "array-of"):
                    target = prop.nested
            responses[str(code)] = target

        return OperationDef(
            operation_id=op_id,
            method=method,
            path=str(path),
            parameters=tuple(params),
            request_body=body,
            responses=responses,
        )


def _pick_content_schema(content: dict) -> Optional[dict]:
    if not content:
        return None
    for media, body in content.items():
        if "json" in str(media):
            return (body or {}).get("schema")
    first = next(iter(content.values())) or {}
    return first.get("schema")


def _synthetic_op_id(method: str, path: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "_", path).strip("_")
    return f"{method.lower()}_{slug}" if slug else method.lower()


# -- serialization ---------------------------------------------------------


def _prop_schema(p: PropertyDef) -> dict:
    if p.type == "object-ref":
        return {"$ref": f"#/components/schemas/{p.nested}"} if p.nested else {"type": "object"}
    if p.type == "array-of":
        if p.nested:
            items: dict = {"$ref": f"#/components/schemas/{p.nested}"}
        else:
            items = {"type": p.items_type or "string"}
            if p.enum_values is not None:
                items["enum"] = list(p.enum_values)
        return {"type": "array", "items": items}
    out: dict = {"type": p.type}
    if p.enum_values is not None:
        out["enum"] = list(p.enum_values)
    for key, attr in (("minimum", "minimum"), ("maximum", "maximum"), ("minLength", "min_length"),
                      ("maxLength", "max_length"), ("format", "format")):
        value = getattr(p, attr)
        if value is not None:
            out[key] = value
    return out


def to_openapi(spec: ServiceSpec) -> dict:
    """Serialize the normalized model back to an OpenAPI 3.0 document."""
    doc: dict = {
        "openapi": "3.0.3",
        "info": {"title": spec.title, "version": spec.version},
        "paths": {},
        "components": {"schemas": {}},
    }
    if spec.base_path:
        doc["servers"] = [{"url": spec.base_path}]
    for name, sdef in spec.schemas.items():
        body: dict = {"type": "object", "properties": {k: _prop_schema(v) for k, v in sdef.properties.items()}}
        if sdef.required:
            body["required"] = list(sdef.required)
        if sdef.synthetic:
            body["x-synthetic"] = True
        doc["components"]["schemas"][name] = body
    for ep in spec.endpoints:
        item: dict = {}
        for op in ep.operations:
            raw: dict = {"operationId": op.operation_id, "responses": {}}
            params = [
                {"name": p.name, "in": p.location, "required": p.required, "schema": _prop_schema(p.schema)}
                for p in op.parameters
                if p.location != "body-field"
            ]
            if params:
                raw["parameters"] = params
            if op.request_body is not None:
                raw["requestBody"] = {"content": {"application/json": {"schema": _prop_schema(op.request_body)}}}
            for code, schema in op.responses.items():
                resp: dict = {"description": code}
                if schema:
                    resp["content"] = {"application/json": {"schema": {"$ref": f"#/components/schemas/{schema}"}}}
                raw["responses"][code] = resp
            item[op.method.lower()] = raw
        doc["paths"][ep.path] = item
    return doc
