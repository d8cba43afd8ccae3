"""Run metrics, bug deduplication and the files a run leaves behind."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .executor import Observation, Outcome
from .paramgen import ConcreteRequest
from .rpg import MUTATION_KINDS

REPORT_SCHEMA_VERSION = 1
FINGERPRINT_BYTES = 2048

_TIMESTAMP = re.compile(
    r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?"
)
_UUID = re.compile(r"\b[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}\b")
_DIGITS = re.compile(r"\d+")


def write_atomic(path, text: str) -> Path:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class AtomicLineWriter:
    """JSON-lines file that only appears under its final name once closed."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, self._tmp = tempfile.mkstemp(dir=self.path.parent, prefix=f".{self.path.name}.", suffix=".tmp")
        self._fh = os.fdopen(fd, "w", encoding="utf-8")
        self.count = 0

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.count += 1

    def close(self) -> Path:
        if not self._fh.closed:
            self._fh.close()
            os.replace(self._tmp, self.path)
        return self.path

    def abort(self) -> None:
        if not self._fh.closed:
            self._fh.close()
        if os.path.exists(self._tmp):
            os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()


# -- metrics -----------------------------------------------------------------


@dataclass
class RunMetrics:
    operation_count: int = 0
    sro: set = field(default_factory=set)
    total_requests: int = 0
    requests_by_outcome: Counter = field(default_factory=Counter)
    rounds_completed: int = 0
    sequences_executed: int = 0
    sequences_aborted: int = 0
    unsendable_steps: int = 0
    rpg_mutation_counts: Counter = field(default_factory=Counter)
    sro_by_round: list = field(default_factory=list)

    def record(self, obs: Observation) -> None:
        if not obs.sent:
            self.unsendable_steps += 1
            return
        self.total_requests += 1
        self.requests_by_outcome[obs.outcome.value] += 1
        if obs.outcome is Outcome.SUCCESS:
            self.sro.add(obs.operation_id)

    def record_mutations(self, mutations: Iterable) -> None:
        for m in mutations:
            self.rpg_mutation_counts[m.kind] += 1

    def checkpoint(self, round: int) -> None:
        self.rounds_completed = round
        self.sro_by_round.append(len(self.sro))

    def to_json(self) -> dict:
        return {
            "sro": sorted(self.sro),
            "sro_count": len(self.sro),
            "operation_count": self.operation_count,
            "total_requests": self.total_requests,
            "requests_by_outcome": {o.value: self.requests_by_outcome.get(o.value, 0) for o in Outcome},
            "rounds_completed": self.rounds_completed,
            "sequences_executed": self.sequences_executed,
            "sequences_aborted": self.sequences_aborted,
            "unsendable_steps": self.unsendable_steps,
            "rpg_mutation_counts": {k: self.rpg_mutation_counts.get(k, 0) for k in MUTATION_KINDS},
            "sro_by_round": list(self.sro_by_round),
        }


# -- bugs --------------------------------------------------------------------


def normalize_body(body: bytes) -> str:
    text = body.decode("utf-8", "replace") if isinstance(body, (bytes, bytearray)) else str(body)
    text = _TIMESTAMP.sub("<ts>", text)
    text = _UUID.sub("<uuid>", text)
    return _DIGITS.sub("<n>", text)


def _hash64(data: bytes) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def fingerprint(body: bytes) -> str:
    return _hash64(normalize_body(body).encode("utf-8")[:FINGERPRINT_BYTES])


def bug_id_for(operation_id: str, status: int, fp: str) -> str:
    return _hash64(f"{operation_id}\x00{status}\x00{fp}".encode("utf-8"))


def replay_line(obs: Observation) -> dict:
    req = obs.request
    return {
        "seq_id": obs.sequence_id,
        "step": obs.step_index,
        "operation_id": obs.operation_id,
        "method": req.method,
        "url": req.url,
        "headers": dict(req.headers),
        "body": req.body,
        "observed_status": obs.status,
    }


@dataclass
class BugReport:
    bug_id: str
    operation_id: str
    status: int
    fingerprint: str
    occurrences: int
    first_seen: str
    minimal_replay: list

    @property
    def signature(self) -> tuple:
        return (self.operation_id, self.status, self.fingerprint)

    @property
    def first_seen_key(self) -> tuple:
        seq, step = self.first_seen.split(":")
        return (int(seq), int(step), self.bug_id)

    def to_json(self) -> dict:
        return {
            "bug_id": self.bug_id,
            "operation_id": self.operation_id,
            "status": self.status,
            "fingerprint": self.fingerprint,
            "occurrences": self.occurrences,
            "first_seen": self.first_seen,
            "minimal_replay_length": len(self.minimal_replay),
        }


class BugCollector:
    """Incremental deduplication; feed it one executed sequence at a time."""

    def __init__(self):
        self._bugs: dict[tuple, BugReport] = {}

    def add_sequence(self, observations: list) -> None:
        for obs in observations:
            if not obs.sent or obs.outcome is not Outcome.SERVER_ERROR:
                continue
            fp = fingerprint(obs.response.body)
            sig = (obs.operation_id, obs.status, fp)
            bug = self._bugs.get(sig)
            if bug is None:
                steps = [replay_line(o) for o in observations if o.sent]
                self._bugs[sig] = BugReport(bug_id_for(*sig), obs.operation_id, obs.status, fp, 1, obs.id, steps)
            else:
                bug.occurrences += 1

    def bugs(self) -> list:
        return sorted(self._bugs.values(), key=lambda b: b.first_seen_key)

    def __len__(self):
        return len(self._bugs)


def dedupe_failures(observations: list) -> list:
    """One BugReport per distinct (operation, status, body fingerprint) among the 5xx observations."""
    by_sequence: dict[int, list] = {}
    for obs in observations:
        by_sequence.setdefault(obs.sequence_id, []).append(obs)
    collector = BugCollector()
    for seq_id in by_sequence:
        collector.add_sequence(by_sequence[seq_id])
    return collector.bugs()


# -- files -------------------------------------------------------------------


def report_schema() -> dict:
    return json.loads(resources.files("rpgfuzz").joinpath("data/report.schema.json").read_text("utf-8"))


def build_report(metrics: RunMetrics, bugs: list, rpg, config: Optional[dict] = None, seed: int = 0,
                 timing: Optional[dict] = None, artifacts: Optional[dict] = None) -> dict:
    from . import __version__

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": {"name": "rpgfuzz", "version": __version__},
        "seed": seed,
        "config": dict(config or {}),
        "metrics": metrics.to_json(),
        "bug_count": len(bugs),
        "bugs": [b.to_json() for b in bugs],
        "rpg": {
            "snapshot": (artifacts or {}).get("rpg_json", "rpg.json"),
            "schemas": len(rpg.schema_nodes),
            "operations": len(rpg.operation_nodes),
            "produces_edges": len(rpg.produces_edges),
            "consumes_edges": len(rpg.consumes_edges),
            "infeasible_consumes_edges": sum(1 for e in rpg.consumes_edges.values() if not e.active),
            "confirmed_equivalences": sum(1 for e in rpg.equivalence_edges.values() if e.state.value == "confirmed"),
        },
        "artifacts": dict(artifacts or {}),
        "timing": dict(timing or {}),
    }


def emit_report(metrics: RunMetrics, bugs: list, rpg, path, **kwargs) -> Path:
    report = build_report(metrics, bugs, rpg, **kwargs)
    return write_atomic(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def emit_replay(items: Iterable, path) -> Path:
    """Write bugs (their minimal replays) or lists of observations as replay lines."""
    with AtomicLineWriter(path) as out:
        for item in items:
            if isinstance(item, BugReport):
                for line in item.minimal_replay:
                    out.write(dict(line, bug_id=item.bug_id))
            else:
                for obs in item:
                    if obs.sent:
                        out.write(replay_line(obs))
    return Path(path)


def load_replay(path) -> list:
    lines = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                lines.append(json.loads(raw))
            except ValueError as exc:
                raise ValueError(f"{path}:{n}: not a JSON line ({exc})") from None
    return lines


@dataclass
class ReplayResult:
    line: dict
    status: int

    @property
    def matches(self) -> bool:
        return self.status == self.line.get("observed_status")


def replay(lines: list, transport) -> list:
    """Re-send recorded requests verbatim, in file order."""
    results = []
    for line in lines:
        req = ConcreteRequest(
            method=line["method"],
            url=line["url"],
            body=line.get("body"),
            headers=dict(line.get("headers") or {}),
            operation_id=line.get("operation_id", ""),
        )
        results.append(ReplayResult(line, transport.send(req).status))
    return results
