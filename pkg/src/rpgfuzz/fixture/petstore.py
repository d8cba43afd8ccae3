"""The six-operation Petstore from the running example.

It keeps the gaps between document and behaviour on purpose. addPet returns
the created pet even though its response is undocumented. findPetsByStatus
rejects order statuses. getOrderById crashes when an order outlives its pet.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Optional
from urllib.parse import parse_qs, urlsplit

from ..executor import RawResponse

BASE_PATH = "/v2"
PET_STATUSES = ("available", "pending", "sold")
ORDER_STATUSES = ("placed", "approved", "delivered")
FIRST_ORDER_ID = 10001


@dataclass
class FixtureState:
    pets: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)
    next_ids: dict = field(default_factory=lambda: {"order": FIRST_ORDER_ID})
    planted_bug_armed: bool = True

    @classmethod
    def seeded(cls, pets=(), **kwargs) -> "FixtureState":
        state = cls(**kwargs)
        for pet in pets:
            state.pets[pet["id"]] = dict(pet)
        return state


def remove_pet(state: FixtureState, pet_id: int) -> bool:
    """Out-of-band deletion; the service itself exposes no pet DELETE."""
    return state.pets.pop(pet_id, None) is not None


def _json(status: int, payload: Any) -> RawResponse:
    return RawResponse(status, json.dumps(payload, sort_keys=True).encode("utf-8"),
                       {"Content-Type": "application/json"})


def _error(status: int, message: str) -> RawResponse:
    return _json(status, {"code": status, "message": message})


def _as_int(raw: Any) -> Optional[int]:
    if isinstance(raw, bool):
        return None
    if isinstance(raw, int):
        return raw
    if isinstance(raw, str):
        try:
            return int(raw)
        except ValueError:
            return None
    return None


def _add_pet(state: FixtureState, body: Any) -> RawResponse:
    if not isinstance(body, dict) or not isinstance(body.get("name"), str):
        return _error(405, "Invalid input")
    status = body.get("status", "available")
    if status not in PET_STATUSES:
        return _error(405, "Invalid input")
    pet_id = body.get("id")
    if pet_id is None:
        pet_id = max(state.pets, default=0) + 1
    elif isinstance(pet_id, bool) or not isinstance(pet_id, int):
        return _error(405, "Invalid input")
    if pet_id in state.pets:
        return _error(409, f"pet {pet_id} already exists")
    pet = {"id": pet_id, "name": body["name"], "status": status}
    state.pets[pet_id] = pet
    return _json(200, pet)


def _find_by_status(state: FixtureState, query: dict) -> RawResponse:
    values = query.get("status", [])
    if not values or any(v not in PET_STATUSES for v in values):
        return _error(400, "Invalid status value")
    found = [state.pets[k] for k in sorted(state.pets) if state.pets[k]["status"] in values]
    return _json(200, found)


def _get_pet(state: FixtureState, raw: str) -> RawResponse:
    pet_id = _as_int(raw)
    if pet_id is None:
        return _error(400, "Invalid ID supplied")
    pet = state.pets.get(pet_id)
    if pet is None:
        return _error(404, "Pet not found")
    return _json(200, pet)


def _place_order(state: FixtureState, body: Any) -> RawResponse:
    if not isinstance(body, dict):
        return _error(400, "Invalid Order")
    pet_id = body.get("petId")
    if isinstance(pet_id, bool) or not isinstance(pet_id, int) or pet_id not in state.pets:
        return _error(400, "Invalid Order")
    status = body.get("status", "placed")
    if status not in ORDER_STATUSES:
        return _error(400, "Invalid Order")
    order_id = state.next_ids["order"]
    state.next_ids["order"] = order_id + 1
    order = {"id": order_id, "petId": pet_id, "status": status}
    state.orders[order_id] = order
    if status == "delivered":
        # the pet leaves the store with the delivery; the order keeps pointing at it
        del state.pets[pet_id]
    return _json(200, order)


def _get_order(state: FixtureState, raw: str) -> RawResponse:
    order_id = _as_int(raw)
    if order_id is None:
        return _error(400, "Invalid ID supplied")
    order = state.orders.get(order_id)
    if order is None:
        return _error(404, "Order not found")
    if state.planted_bug_armed and order["petId"] not in state.pets:
        text = (
            f"java.lang.NullPointerException: pet {order['petId']} of order {order_id} is null\n"
            f"\tat io.swagger.petstore.OrderController.getOrderById(OrderController.java:{order_id % 97 + 40})"
        )
        return RawResponse(500, text.encode("utf-8"), {"Content-Type": "text/plain"})
    return _json(200, order)


def _delete_order(state: FixtureState, raw: str) -> RawResponse:
    order_id = _as_int(raw)
    if order_id is None:
        return _error(400, "Invalid ID supplied")
    if state.orders.pop(order_id, None) is None:
        return _error(404, "Order not found")
    return RawResponse(200, b"", {})


def handle(req, state: FixtureState) -> RawResponse:
    """Apply one request to ``state``. Anything with ``method``, ``url`` and ``body`` works as ``req``."""
    parts = urlsplit(req.url)
    path = parts.path
    if path.startswith(BASE_PATH):
        path = path[len(BASE_PATH):]
    segments = [s for s in path.split("/") if s]
    query = parse_qs(parts.query)
    method = req.method.upper()
    body = req.body

    if segments == ["pet"]:
        return _add_pet(state, body) if method == "POST" else _error(405, "Method not allowed")
    if segments == ["pet", "findByStatus"]:
        return _find_by_status(state, query) if method == "GET" else _error(405, "Method not allowed")
    if len(segments) == 2 and segments[0] == "pet":
        return _get_pet(state, segments[1]) if method == "GET" else _error(405, "Method not allowed")
    if segments == ["store", "order"]:
        return _place_order(state, body) if method == "POST" else _error(405, "Method not allowed")
    if len(segments) == 3 and segments[:2] == ["store", "order"]:
        if method == "GET":
            return _get_order(state, segments[2])
        if method == "DELETE":
            return _delete_order(state, segments[2])
        return _error(405, "Method not allowed")
    return _error(404, "Not found")


@dataclass
class _WireRequest:
    method: str
    url: str
    body: Any


def serve(state: Optional[FixtureState] = None, host: str = "127.0.0.1", port: int = 8080):
    """Bind the fixture to a loopback socket; returns the (not yet started) server."""
    from http.server import BaseHTTPRequestHandler, HTTPServer

    state = state if state is not None else FixtureState()
    lock = threading.Lock()

    class Handler(BaseHTTPRequestHandler):
        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw) if raw else None
            except ValueError:
                body = raw.decode("utf-8", "replace")
            with lock:
                resp = handle(_WireRequest(self.command, self.path, body), state)
            self.send_response(resp.status)
            for name, value in resp.headers.items():
                self.send_header(name, value)
            self.send_header("Content-Length", str(len(resp.body)))
            self.end_headers()
            self.wfile.write(resp.body)

        do_GET = do_POST = do_PUT = do_DELETE = _dispatch

        def log_message(self, format, *args):
            pass

    return HTTPServer((host, port), Handler)
