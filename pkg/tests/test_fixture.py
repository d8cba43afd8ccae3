import threading

import pytest

from rpgfuzz.executor import HttpTransport
from rpgfuzz.fixture import FixtureState, handle, remove_pet, serve
from rpgfuzz.paramgen import ConcreteRequest
from rpgfuzz.report import fingerprint
from rpgfuzz.rpg import build_initial_rpg
from rpgfuzz.spec_model import load_spec
from rpgfuzz.fixture import SPEC_PATH

CAT = {"id": 1, "name": "cat", "status": "available"}


def send(state, method, url, body=None):
    resp = handle(ConcreteRequest(method, url, body=body), state)
    return resp.status, resp.json()


def test_add_pet_returns_the_pet():
    state = FixtureState()
    assert send(state, "POST", "/v2/pet", CAT) == (200, CAT)
    assert state.pets == {1: CAT}


def test_add_pet_twice_is_refused():
    state = FixtureState()
    send(state, "POST", "/v2/pet", CAT)
    assert send(state, "POST", "/v2/pet", CAT)[0] == 409


def test_server_assigns_pet_id():
    state = FixtureState.seeded([dict(CAT, id=7)])
    status, body = send(state, "POST", "/v2/pet", {"name": "dog"})
    assert status == 200 and body == {"id": 8, "name": "dog", "status": "available"}


@pytest.mark.parametrize("body", [None, {}, {"name": 3}, {"name": "x", "status": "placed"}, {"name": "x", "id": "1"},
                                  {"name": "x", "id": True}])
def test_add_pet_rejects_bad_input(body):
    assert send(FixtureState(), "POST", "/v2/pet", body)[0] == 405


def test_find_by_status():
    state = FixtureState.seeded([dict(CAT, id=2), CAT, {"id": 3, "name": "z", "status": "sold"}])
    status, body = send(state, "GET", "/v2/pet/findByStatus?status=available")
    assert status == 200 and [p["id"] for p in body] == [1, 2]
    assert send(state, "GET", "/v2/pet/findByStatus?status=available&status=sold")[1][-1]["id"] == 3
    for bad in ("placed", "approved", "delivered", "x"):
        assert send(state, "GET", f"/v2/pet/findByStatus?status={bad}")[0] == 400
    assert send(state, "GET", "/v2/pet/findByStatus")[0] == 400


def test_get_pet():
    state = FixtureState.seeded([CAT])
    assert send(state, "GET", "/v2/pet/1") == (200, CAT)
    assert send(state, "GET", "/v2/pet/2")[0] == 404
    assert send(state, "GET", "/v2/pet/abc")[0] == 400


def test_order_lifecycle():
    state = FixtureState.seeded([CAT])
    status, order = send(state, "POST", "/v2/store/order", {"petId": 1, "status": "placed"})
    assert status == 200 and order == {"id": 10001, "petId": 1, "status": "placed"}
    assert send(state, "GET", "/v2/store/order/10001") == (200, order)
    resp = handle(ConcreteRequest("DELETE", "/v2/store/order/10001"), state)
    assert (resp.status, resp.body) == (200, b"")
    assert send(state, "DELETE", "/v2/store/order/10001")[0] == 404
    assert send(state, "GET", "/v2/store/order/10001")[0] == 404


@pytest.mark.parametrize("body", [None, {"petId": 2}, {"petId": 1, "status": "sold"}, {"petId": "1"}])
def test_place_order_rejects_bad_input(body):
    assert send(FixtureState.seeded([CAT]), "POST", "/v2/store/order", body)[0] == 400


def test_planted_bug_via_hook():
    state = FixtureState.seeded([CAT])
    send(state, "POST", "/v2/store/order", {"petId": 1})
    assert remove_pet(state, 1) and not remove_pet(state, 1)
    resp = handle(ConcreteRequest("GET", "/v2/store/order/10001"), state)
    assert resp.status == 500 and b"NullPointerException" in resp.body


def test_planted_bug_via_delivery():
    state = FixtureState.seeded([CAT])
    send(state, "POST", "/v2/store/order", {"petId": 1, "status": "delivered"})
    assert 1 not in state.pets
    first = handle(ConcreteRequest("GET", "/v2/store/order/10001"), state)
    state.pets[2] = dict(CAT, id=2)
    send(state, "POST", "/v2/store/order", {"petId": 2, "status": "delivered"})
    second = handle(ConcreteRequest("GET", "/v2/store/order/10002"), state)
    assert first.status == second.status == 500
    assert first.body != second.body and fingerprint(first.body) == fingerprint(second.body)


def test_disarmed_bug():
    state = FixtureState.seeded([CAT], planted_bug_armed=False)
    send(state, "POST", "/v2/store/order", {"petId": 1, "status": "delivered"})
    assert send(state, "GET", "/v2/store/order/10001")[0] == 200


def test_unknown_routes():
    assert send(FixtureState(), "GET", "/v2/nothing")[0] == 404
    assert send(FixtureState(), "PUT", "/v2/pet")[0] == 405
    assert send(FixtureState(), "POST", "/v2/store/order/1")[0] == 405


def test_same_requests_same_responses():
    reqs = [("POST", "/v2/pet", {"name": "a"}), ("POST", "/v2/store/order", {"petId": 1, "status": "delivered"}),
            ("GET", "/v2/store/order/10001", None), ("GET", "/v2/pet/findByStatus?status=sold", None)]

    def stream():
        state = FixtureState()
        return [handle(ConcreteRequest(m, u, body=b), state).body for m, u, b in reqs]

    assert stream() == stream()


def test_bundled_spec_yields_the_running_example():
    rpg = build_initial_rpg(load_spec(SPEC_PATH))
    assert len(rpg.operation_nodes) == 6
    assert ("addPet", "Pet") not in rpg.produces_edges


def test_loopback_server():
    server = serve(FixtureState.seeded([CAT]), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        transport = HttpTransport(f"http://127.0.0.1:{server.server_address[1]}", timeout=5)
        resp = transport.send(ConcreteRequest("GET", "/v2/pet/1"))
        assert resp.status == 200 and resp.json() == CAT
        resp = transport.send(ConcreteRequest("POST", "/v2/pet", body={"name": "dog"},
                                              headers={"Content-Type": "application/json"}))
        assert resp.status == 200 and resp.json()["id"] == 2
    finally:
        server.shutdown()
        server.server_close()


def test_unreachable_host_is_a_transport_failure():
    resp = HttpTransport("http://127.0.0.1:9", timeout=0.5).send(ConcreteRequest("GET", "/v2/pet/1"))
    assert resp.failed_transport and resp.status == 0
