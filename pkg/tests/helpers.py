"""Builders shared by several test modules."""

import random

from rpgfuzz.executor import Observation, Outcome, RawResponse, classify
from rpgfuzz.paramgen import Binding, ConcreteRequest
from rpgfuzz.rpg import (
    AddConsumesEdge,
    AddProducesEdge,
    ConfirmEquivalence,
    MarkConsumesInfeasible,
    Rpg,
    apply_mutation,
)
from rpgfuzz.spec_model import CrudKind

ORDER_STATUS_EDGE = ("Order", "findPetsByStatus", (("status", "status"),))
PET_ID_EDGE = ("Pet", "getPetById", (("id", "petId"),))
ORDER_PETID_EDGE = ("Order", "getPetById", (("petId", "petId"),))


def refine_running_example(rpg):
    """The refined graph of the running example, reached by hand-applied mutations."""
    for m in (
        AddProducesEdge("addPet", "Pet"),
        ConfirmEquivalence(("Order", "Pet"), (("petId", "id"),)),
        AddConsumesEdge("Pet", "getPetById", (("id", "petId"),)),
        MarkConsumesInfeasible(ORDER_STATUS_EDGE, 0),
    ):
        apply_mutation(rpg, m)
    return rpg


def observation(op, status, body=None, *, seq=0, step=0, bindings=None, url="/x", method="GET"):
    import json

    raw = b"" if body is None else (body if isinstance(body, bytes) else json.dumps(body).encode())
    req = ConcreteRequest(method=method, url=url, operation_id=op, bindings=dict(bindings or {}))
    resp = RawResponse(status, raw)
    return Observation(seq, step, op, req, resp, classify(status), bool(bindings), resp.json())


def transport_failure(op, *, seq=0, step=0, bindings=None):
    req = ConcreteRequest(method="GET", url="/x", operation_id=op, bindings=dict(bindings or {}))
    resp = RawResponse(0, transport_error="Timeout")
    return Observation(seq, step, op, req, resp, Outcome.TRANSPORT_FAILURE, bool(bindings), None)


def binding(param, value, edge, *, step=0, schema=None, prop=None, element=None):
    return Binding(param, value, step, element, schema or edge[0], prop or edge[2][0][0], edge)


def random_rpg(rng: random.Random, max_schemas=4, max_ops=6) -> Rpg:
    """Small random graph; schemas carry no property list so any label is accepted."""
    rpg = Rpg()
    schemas = [f"S{i}" for i in range(rng.randint(1, max_schemas))]
    ops = [f"o{i}" for i in range(rng.randint(1, max_ops))]
    for s in schemas:
        rpg.add_schema(s)
    kinds = list(CrudKind)
    for o in ops:
        rpg.add_operation(o, rng.choice(kinds), path=f"/{rng.randint(0, 2)}")
    for o in ops:
        for s in schemas:
            if rng.random() < 0.35:
                rpg.add_produces(o, s)
            if rng.random() < 0.35:
                edge = rpg.add_consumes(s, o, [("p", "q")])
                if rng.random() < 0.15:
                    apply_mutation(rpg, MarkConsumesInfeasible(edge.key, 0))
    for i, a in enumerate(schemas):
        for b in schemas[i + 1:]:
            if rng.random() < 0.5:
                rpg.add_equivalence(a, b)
                if rng.random() < 0.6:
                    apply_mutation(rpg, ConfirmEquivalence((a, b), (("p", "p"),)))
    return rpg
