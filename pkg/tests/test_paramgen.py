import json

import pytest

from rpgfuzz.errors import UnboundRequiredPathParamError
from rpgfuzz.paramgen import (
    BindingContext,
    ConcreteRequest,
    StrategyConfig,
    ValuePool,
    bind_from_response,
    constrained_scalar,
    next_request,
    value_for_schema,
)
from rpgfuzz.rpg import build_initial_rpg
from rpgfuzz.spec_model import PropertyDef, SchemaDef, parse_spec

PET_STATUSES = {"available", "pending", "sold"}


def ctx_of(*records):
    ctx = BindingContext()
    for step, (op, body) in enumerate(records):
        ctx.add(step, op, body)
    return ctx


def test_get_pet_binds_pet_id_from_order(refined_rpg, petstore_spec):
    ctx = ctx_of(("getOrderById", {"id": 1, "petId": 1, "status": "succ"}))
    req = next_request("getPetById", refined_rpg, petstore_spec, ctx, ValuePool(0))
    assert req.url == "/v2/pet/1"
    assert req.assignment == {"petId": 1}
    b = req.bindings["petId"]
    assert (b.step, b.schema, b.property, b.element) == (0, "Order", "petId", None)
    assert req.bindings_used


def test_bind_from_placed_order(refined_rpg):
    ctx = ctx_of(("placeOrder", {"id": 7, "petId": 3, "quantity": 1, "status": "placed"}))
    assert {k: b.value for k, b in bind_from_response("getPetById", refined_rpg, ctx).items()} == {"petId": 3}


def test_bind_with_empty_context(refined_rpg):
    assert bind_from_response("getPetById", refined_rpg, BindingContext()) == {}


def test_bind_newest_first(refined_rpg):
    ctx = ctx_of(("addPet", {"id": 5, "name": "rex", "status": "available"}),
                 ("placeOrder", {"id": 10001, "petId": 9, "status": "placed"}))
    assert bind_from_response("getPetById", refined_rpg, ctx)["petId"].value == 9


def test_bind_through_confirmed_equivalence_only(initial_rpg, refined_rpg):
    # a Pet object can feed getPetById only once Pet.id is known to be Order.petId
    ctx = ctx_of(("getPetById", {"id": 5, "name": "rex"}))
    assert bind_from_response("getPetById", initial_rpg, ctx) == {}
    assert bind_from_response("getPetById", refined_rpg, ctx)["petId"].value == 5


def test_bind_from_array_response(initial_rpg):
    ctx = ctx_of(("findPetsByStatus", [{"name": "a"}, {"id": 4, "name": "b", "status": "sold"}]))
    b = bind_from_response("findPetsByStatus", initial_rpg, ctx)["status"]
    assert (b.value, b.element) == ("sold", 1)


def test_infeasible_edges_are_not_followed(refined_rpg):
    ctx = ctx_of(("placeOrder", {"id": 10001, "petId": 9, "status": "placed"}))
    assert bind_from_response("findPetsByStatus", refined_rpg, ctx) == {}


def test_enum_query_value(initial_rpg, petstore_spec):
    strategy = StrategyConfig(p_spec=1.0)
    pool = ValuePool(3)
    for _ in range(30):
        req = next_request("findPetsByStatus", initial_rpg, petstore_spec, BindingContext(), pool, strategy)
        assert req.query["status"] in PET_STATUSES
        assert req.url == f"/v2/pet/findByStatus?status={req.query['status']}"


def test_zero_parameter_operation():
    spec = parse_spec('{"openapi": "3.0.0", "info": {}, "paths": {"/ping": {"get": '
                      '{"operationId": "ping", "responses": {"200": {"description": "ok"}}}}}}')
    rpg = build_initial_rpg(spec)
    for p in (0.0, 1.0):
        req = next_request("ping", rpg, spec, BindingContext(), ValuePool(1), StrategyConfig(p_reuse=p, p_spec=p))
        assert (req.url, req.query, req.body, req.headers) == ("/ping", {}, None, {})


def test_reuse_is_byte_equal(initial_rpg, petstore_spec):
    pool = ValuePool(0)
    stored = ConcreteRequest("POST", "/v2/store/order", body={"petId": 42, "status": "placed"},
                             operation_id="placeOrder", assignment={"petId": 42, "status": "placed"})
    pool.record_success(stored)
    always = StrategyConfig(p_reuse=1.0, optional_param_rate=1.0)
    req = next_request("placeOrder", initial_rpg, petstore_spec, BindingContext(), pool, always)
    assert json.dumps(req.body["petId"]) == "42" and req.body["status"] == "placed"
    pool.record_success(ConcreteRequest("GET", "/v2/pet/77", operation_id="getPetById", assignment={"petId": 77}))
    assert next_request("getPetById", initial_rpg, petstore_spec, BindingContext(), pool, always).url == "/v2/pet/77"


def test_pool_copies_are_independent():
    pool = ValuePool(0)
    req = ConcreteRequest("POST", "/x", body={"tags": [1]}, operation_id="op", assignment={"tags": [1]})
    pool.record_success(req)
    req.body["tags"].append(2)
    assert pool.last_success["op"]["body"] == {"tags": [1]}


def test_pet_body_shape(initial_rpg, petstore_spec):
    pool = ValuePool(5)
    strategy = StrategyConfig(p_spec=1.0, optional_param_rate=1.0)
    req = next_request("addPet", initial_rpg, petstore_spec, BindingContext(), pool, strategy)
    assert isinstance(req.body["id"], int) and isinstance(req.body["name"], str)
    assert req.body["status"] in PET_STATUSES
    assert req.headers == {"Content-Type": "application/json"}


def test_required_body_fields_always_present(initial_rpg, petstore_spec):
    pool = ValuePool(2)
    strategy = StrategyConfig(optional_param_rate=0.0)
    required = {p.name for p in petstore_spec.operation("addPet").params_in("body-field") if p.required}
    for _ in range(10):
        body = next_request("addPet", initial_rpg, petstore_spec, BindingContext(), pool, strategy).body
        assert set(body) == required


def test_pet_schema_value(petstore_spec):
    value = value_for_schema(petstore_spec.schemas["Pet"], petstore_spec, ValuePool(1), 3, StrategyConfig(p_spec=1.0))
    assert isinstance(value["id"], int) and isinstance(value["name"], str) and value["status"] in PET_STATUSES


def test_empty_schema_value(petstore_spec):
    assert value_for_schema(SchemaDef("Empty"), petstore_spec, ValuePool(0), 3) == {}


def test_self_referential_depth():
    spec = parse_spec(json.dumps({
        "openapi": "3.0.0", "info": {}, "paths": {},
        "components": {"schemas": {"Node": {"type": "object", "properties": {
            "v": {"type": "integer"}, "next": {"$ref": "#/components/schemas/Node"}}}}},
    }))
    value = value_for_schema(spec.schemas["Node"], spec, ValuePool(0), 2)
    assert "next" in value and "next" in value["next"]
    assert "next" not in value["next"]["next"]


def test_unbound_path_parameter_raises(petstore_spec):
    spec = parse_spec(json.dumps({
        "openapi": "3.0.0", "info": {},
        "paths": {"/things/{thing}": {"get": {"operationId": "getThing", "parameters": [
            {"name": "thing", "in": "path", "required": True,
             "schema": {"type": "object", "properties": {"a": {"type": "integer"}}}}],
            "responses": {"200": {"description": "ok"}}}}},
    }))
    with pytest.raises(UnboundRequiredPathParamError):
        next_request("getThing", build_initial_rpg(spec), spec, BindingContext(), ValuePool(0))


def test_path_values_are_quoted():
    spec = parse_spec(json.dumps({
        "openapi": "3.0.0", "info": {},
        "paths": {"/u/{name}": {"get": {"operationId": "getUser", "parameters": [
            {"name": "name", "in": "path", "required": True, "schema": {"type": "string"}}],
            "responses": {"200": {"description": "ok"}}}}},
    }))
    pool = ValuePool(0)
    pool.record_success(ConcreteRequest("GET", "", operation_id="getUser", assignment={"name": "a b/c"}))
    req = next_request("getUser", build_initial_rpg(spec), spec, BindingContext(), pool, StrategyConfig(p_reuse=1.0))
    assert req.url == "/u/a%20b%2Fc"


def test_constrained_ranges():
    import random

    rng = random.Random(0)
    prop = PropertyDef("n", "integer", minimum=3, maximum=5)
    assert {constrained_scalar(prop, rng) for _ in range(100)} == {3, 4, 5}
    s = constrained_scalar(PropertyDef("s", "string", min_length=2, max_length=4), rng)
    assert 2 <= len(s) <= 4


@pytest.mark.parametrize("kwargs", [{"p_reuse": 1.5}, {"p_spec": -0.1}, {"depth_limit": -1}])
def test_bad_strategy(kwargs):
    with pytest.raises(ValueError):
        StrategyConfig(**kwargs)


def test_same_seed_same_requests(refined_rpg, petstore_spec):
    def stream(seed):
        pool = ValuePool(seed)
        return [next_request(op, refined_rpg, petstore_spec, BindingContext(), pool).url
                for op in ("getPetById", "findPetsByStatus", "getOrderById") * 5]

    assert stream(8) == stream(8)
