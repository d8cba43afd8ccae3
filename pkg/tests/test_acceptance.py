"""Acceptance suite: one test per criterion, one PASS/FAIL summary line each."""

import json
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import pytest

from rpgfuzz.executor import ExecConfig, FixtureTransport, execute_sequence
from rpgfuzz.feedback import EquivalenceEvidence, FeedbackConfig, ingest
from rpgfuzz.fixture import FixtureState
from rpgfuzz.orchestrator import RunConfig, run
from rpgfuzz.paramgen import ConcreteRequest, StrategyConfig, ValuePool
from rpgfuzz.report import load_replay, replay
from rpgfuzz.rpg import (
    AddConsumesEdge,
    AddProducesEdge,
    ConfirmEquivalence,
    MarkConsumesInfeasible,
    build_initial_rpg,
)
from rpgfuzz.seqgen import CallSequence, GenConfig, SequenceSet, generate_call_sequences, visit

from helpers import ORDER_PETID_EDGE, ORDER_STATUS_EDGE, PET_ID_EDGE, binding, observation, random_rpg
from oracles import expected_sequences

ROOT = Path(__file__).resolve().parents[1]
CROSS = ("placeOrder", "getPetById", "findPetsByStatus")


class Clock:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.start = time.monotonic()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.monotonic() - self.start
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.2f}s, limit {self.limit}s"


@pytest.mark.criterion(1, "initial graph equals the running example's edge set")
def test_initial_rpg_shape(petstore_spec):
    with Clock(1):
        rpg = build_initial_rpg(petstore_spec)
    assert set(rpg.produces_edges) == {("findPetsByStatus", "Pet"), ("getPetById", "Pet"),
                                       ("placeOrder", "Order"), ("getOrderById", "Order")}
    assert set(rpg.consumes_edges) == {
        ("Pet", "findPetsByStatus", (("status", "status"),)),
        ORDER_STATUS_EDGE,
        ORDER_PETID_EDGE,
        ("Order", "getOrderById", (("id", "orderId"),)),
        ("Order", "deleteOrder", (("id", "orderId"),)),
    }
    assert set(rpg.equivalence_edges) == {("Order", "Pet")}
    assert rpg.endpoint_edges == {("deleteOrder", "getOrderById")}
    assert ("addPet", "Pet") not in rpg.produces_edges


@pytest.mark.criterion(2, "visit(Pet) on the refined graph yields six length-2 sequences")
def test_cartesian_count(refined_rpg):
    with Clock(1):
        out = visit("Pet", {"Order"}, refined_rpg, SequenceSet(), GenConfig())
    assert len(out) == 6 and all(len(s) == 2 for s in out)


@pytest.mark.criterion(3, "(placeOrder, getPetById, findPetsByStatus) appears only after confirmation")
def test_cross_schema_concatenation(initial_rpg, refined_rpg):
    from rpgfuzz.rpg import EquivalenceState

    with Clock(1):
        assert CROSS in generate_call_sequences(refined_rpg)
        unconfirmed = refined_rpg.copy()
        eq = unconfirmed.equivalence_edges[("Order", "Pet")]
        eq.state, eq.label = EquivalenceState.CANDIDATE, ()
        assert CROSS not in generate_call_sequences(unconfirmed, GenConfig(use_candidate_equivalence=False))


@pytest.mark.criterion(4, "two observation pairs confirm exactly Pet.id = Order.petId, nothing after pair 1")
def test_equivalence_inference(initial_rpg):
    pairs = [({"id": 1, "petId": 1, "status": "succ"}, {"id": 1, "name": "cat", "status": "sold"}),
             ({"id": 2, "petId": 4, "status": "succ"}, {"id": 4, "name": "dog", "status": "sold"})]
    evidence, emitted = EquivalenceEvidence(), []
    with Clock(1):
        for seq, (order, pet) in enumerate(pairs):
            got = ingest(initial_rpg, observation("getOrderById", 200, order, seq=seq, step=0), evidence)
            b = binding("petId", order["petId"], ORDER_PETID_EDGE, step=0)
            got += ingest(initial_rpg, observation("getPetById", 200, pet, seq=seq, step=1,
                                                   bindings={"petId": b}), evidence)
            emitted.append([m for m in got if isinstance(m, ConfirmEquivalence)])
    assert emitted == [[], [ConfirmEquivalence(("Order", "Pet"), (("petId", "id"),))]]
    assert initial_rpg.equivalence("Pet", "Order").properties_for("Pet") == [("id", "petId")]


@pytest.mark.criterion(5, "addPet 2xx adds (addPet, Pet); confirmation adds Pet -> getPetById")
def test_scenarios_one_and_three(initial_rpg):
    evidence = EquivalenceEvidence()
    with Clock(1):
        first = ingest(initial_rpg, observation("addPet", 200, {"id": 1, "name": "cat", "status": "available"},
                                                method="POST"), evidence)
        assert first == [AddProducesEdge("addPet", "Pet")]
        assert PET_ID_EDGE not in initial_rpg.consumes_edges
        for seq, (order, pet) in enumerate([({"id": 1, "petId": 1}, {"id": 1, "name": "a"}),
                                            ({"id": 2, "petId": 4}, {"id": 4, "name": "b"})]):
            ingest(initial_rpg, observation("getOrderById", 200, order, seq=seq, step=0), evidence)
            b = binding("petId", order["petId"], ORDER_PETID_EDGE, step=0)
            last = ingest(initial_rpg, observation("getPetById", 200, pet, seq=seq, step=1,
                                                   bindings={"petId": b}), evidence)
    assert AddConsumesEdge("Pet", "getPetById", (("id", "petId"),)) in last
    assert PET_ID_EDGE in initial_rpg.consumes_edges


@pytest.mark.criterion(6, "theta=3 drops Order -> findPetsByStatus on the third bound failure only")
def test_theta_deletion(initial_rpg, petstore_spec):
    with Clock(1):
        transport = FixtureTransport(FixtureState.seeded([{"id": 3, "name": "rex", "status": "available"}]))
        pool = ValuePool(0)
        pool.record_success(ConcreteRequest("POST", "", operation_id="placeOrder",
                                            assignment={"petId": 3, "status": "placed"}))
        cfg, evidence = FeedbackConfig(theta=3), EquivalenceEvidence()
        seq = CallSequence(("placeOrder", "findPetsByStatus"))
        bound_failures, marked_at = 0, None
        for i in range(3):
            for obs in execute_sequence(seq, transport, initial_rpg, petstore_spec, pool,
                                        ExecConfig(StrategyConfig(p_reuse=1.0)), sequence_id=i):
                if obs.operation_id == "findPetsByStatus":
                    assert obs.status == 400 and obs.bindings_used
                    bound_failures += 1
                for m in ingest(initial_rpg, obs, evidence, cfg):
                    if isinstance(m, MarkConsumesInfeasible):
                        marked_at = bound_failures
        assert marked_at == 3 and not initial_rpg.consumes_edges[ORDER_STATUS_EDGE].active

        # unbound (random) failures against the same edge never count
        fresh = build_initial_rpg(petstore_spec)
        random_pool = ValuePool(1)
        for i in range(20):
            for obs in execute_sequence(CallSequence(("findPetsByStatus",)), FixtureTransport(), fresh, petstore_spec,
                                        random_pool, ExecConfig(StrategyConfig(p_spec=0.0)), sequence_id=i):
                assert not obs.bindings_used
                assert ingest(fresh, obs, evidence, FeedbackConfig(theta=1)) == []
        assert fresh.consumes_edges[ORDER_STATUS_EDGE].consecutive_failures == 0


@pytest.mark.criterion(7, "generator equals the brute-force oracle on 200 random graphs")
def test_oracle_equivalence():
    import random

    rng = random.Random(7)
    cfg = GenConfig(max_sequence_length=4, max_sequences_per_schema=10**6)
    with Clock(30):
        disagreements = 0
        for _ in range(200):
            rpg = random_rpg(rng, max_schemas=4, max_ops=6)
            if set(generate_call_sequences(rpg, cfg).vectors()) != expected_sequences(rpg, 4):
                disagreements += 1
    assert disagreements == 0


@pytest.mark.criterion(8, "fixture run: SRO 6, exactly one bug, replay re-triggers it")
def test_end_to_end(tmp_path):
    with Clock(60):
        result = run(RunConfig(fixture=True, budget=60, seed=1, out_dir=str(tmp_path)))
    report = result.report
    assert report["metrics"]["sro_count"] == 6
    assert report["bug_count"] == 1 and report["bugs"][0]["status"] == 500
    lines = load_replay(result.path("replay"))
    results = replay(lines, FixtureTransport())
    assert all(r.matches for r in results)
    assert sum(1 for r in results if r.status == 500) == report["bugs"][0]["occurrences"] > 0


@pytest.mark.criterion(9, "ablations over 5 seeds: full SRO 6 always, no-rpg lower mean, rpg-only no mutations")
def test_ablations(tmp_path):
    seeds = range(1, 6)
    with Clock(600):
        full, no_rpg = [], []
        for seed in seeds:
            r = run(RunConfig(fixture=True, budget=60, seed=seed, out_dir=str(tmp_path / f"full{seed}")))
            full.append(r.report["metrics"]["sro_count"])
            r = run(RunConfig(fixture=True, budget=60, seed=seed, ablation="no-rpg",
                              out_dir=str(tmp_path / f"norpg{seed}")))
            no_rpg.append(r.report["metrics"]["sro_count"])
            r = run(RunConfig(fixture=True, budget=60, seed=seed, ablation="rpg-only",
                              out_dir=str(tmp_path / f"rpgonly{seed}")))
            assert r.path("feedback_log").read_text() == ""
            snapshot = json.loads(r.path("rpg_json").read_text())
            assert {"operation": "addPet", "schema": "Pet"} not in [
                {k: e[k] for k in ("operation", "schema")} for e in snapshot["produces"]]
    assert full == [6] * 5
    assert statistics.mean(no_rpg) < statistics.mean(full)


def _cli_run(out, hash_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(hash_seed))
    proc = subprocess.run([sys.executable, "-m", "rpgfuzz", "run", "--fixture", "--budget", "60s", "--seed", "1",
                           "--out", str(out)], capture_output=True, text=True, env=env, timeout=120, cwd=ROOT)
    assert proc.returncode == 2, proc.stderr
    report = json.loads((out / "report.json").read_text())
    report.pop("timing")
    return report


@pytest.mark.criterion(10, "two identical runs give the same report.json apart from timing")
def test_determinism(tmp_path):
    with Clock(120):
        a = _cli_run(tmp_path / "a", 1)
        b = _cli_run(tmp_path / "b", 2)
    assert json.dumps(a, indent=2, sort_keys=True) == json.dumps(b, indent=2, sort_keys=True)
    for name in ("rpg.json", "replay.jsonl", "bugs.jsonl", "feedback.log.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
