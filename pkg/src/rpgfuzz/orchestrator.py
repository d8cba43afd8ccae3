"""The fuzzing loop: generate sequences, execute them, learn, repeat."""

from __future__ import annotations

import datetime as _dt
import json
import logging
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError, SequenceAbortedError
from .executor import ExecConfig, FixtureTransport, HttpTransport, execute_sequence
from .feedback import EquivalenceEvidence, FeedbackConfig, ingest, maybe_reinstate
from .paramgen import StrategyConfig, ValuePool
from .report import AtomicLineWriter, BugCollector, RunMetrics, emit_report, replay_line, write_atomic
from .rpg import build_initial_rpg, mutation_record
from .seqgen import CallSequence, GenConfig, generate_call_sequences, random_sequences
from .spec_model import CrudKind, load_spec

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no-rpg", "rpg-only")
FIXTURE_ROUND_QUOTA = 25

ARTIFACTS = {
    "report": "report.json",
    "rpg_json": "rpg.json",
    "rpg_dot": "rpg.dot",
    "replay": "replay.jsonl",
    "bugs_replay": "bugs.jsonl",
    "feedback_log": "feedback.log.jsonl",
}

_DURATION = re.compile(r"(\d+(?:\.\d+)?)([hms])")


def parse_duration(text) -> float:
    """Seconds in '90', '60s', '10m', '8h' or combinations like '1h30m'."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower()
    try:
        return float(s)
    except ValueError:
        pass
    pos, total = 0, 0.0
    for m in _DURATION.finditer(s):
        if m.start() != pos:
            break
        total += float(m.group(1)) * {"h": 3600, "m": 60, "s": 1}[m.group(2)]
        pos = m.end()
    if pos != len(s) or not s:
        raise ConfigError(f"cannot parse duration {text!r}")
    return total


def parse_header(text: str) -> tuple:
    name, sep, value = text.partition(":")
    if not sep or not name.strip():
        raise ConfigError(f"header must look like Name:Value, got {text!r}")
    return name.strip(), value.strip()


@dataclass
class RunConfig:
    spec_path: Optional[str] = None
    base_url: Optional[str] = None
    fixture: bool = False
    budget: float = 60.0
    seed: int = 0
    theta: int = 5
    p_reuse: float = 0.8
    p_spec: float = 0.8
    max_sequence_length: int = 5
    max_sequences_per_schema: int = 64
    sequences_per_round: int = 200
    max_rounds: Optional[int] = None
    reinstate_cooldown: int = 10
    headers: dict = field(default_factory=dict)
    ablation: str = "full"
    out_dir: str = "rpgfuzz-out"
    timeout: float = 10.0
    fail_on_bugs: bool = True

    def validate(self) -> None:
        if not self.budget > 0:
            raise ConfigError("budget must be positive")
        if bool(self.base_url) == bool(self.fixture):
            raise ConfigError("exactly one of base_url and fixture must be set")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {', '.join(ABLATIONS)}")
        if self.theta < 1:
            raise ConfigError("theta must be >= 1")
        for name in ("p_reuse", "p_spec"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.max_sequence_length < 1 or self.sequences_per_round < 1 or self.max_sequences_per_schema < 1:
            raise ConfigError("sequence limits must be >= 1")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.spec_path is None and not self.fixture:
            raise ConfigError("a spec is required when fuzzing a live service")
        if not -(2**63) <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")

    @property
    def round_quota(self) -> Optional[int]:
        if self.max_rounds is not None:
            return self.max_rounds
        return FIXTURE_ROUND_QUOTA if self.fixture else None

    def echo(self) -> dict:
        """Settings that shape the run; paths to output and secrets stay out."""
        return {
            "spec": str(self.spec_path) if self.spec_path else "bundled-petstore",
            "target": "fixture" if self.fixture else self.base_url,
            "budget_seconds": self.budget,
            "theta": self.theta,
            "p_reuse": self.p_reuse,
            "p_spec": self.p_spec,
            "max_sequence_length": self.max_sequence_length,
            "max_sequences_per_schema": self.max_sequences_per_schema,
            "sequences_per_round": self.sequences_per_round,
            "round_quota": self.round_quota,
            "reinstate_cooldown": self.reinstate_cooldown,
            "header_names": sorted(self.headers),
            "ablation": self.ablation,
        }


@dataclass
class RunResult:
    exit_code: int
    report: dict
    out_dir: Path

    def path(self, artifact: str) -> Path:
        return self.out_dir / ARTIFACTS[artifact]


def schedule(sequences, rpg, count: int) -> list:
    """Up to ``count`` sequences: Create-rooted ones first, cycling when the set is small."""
    ordered = sorted(
        sequences,
        key=lambda s: 0 if rpg.crud(s.first) is CrudKind.CREATE else 1,
    )
    if not ordered:
        return []
    return [ordered[i % len(ordered)] for i in range(count)]


def run(cfg: RunConfig, transport=None) -> RunResult:
    cfg.validate()
    if cfg.fixture:
        from .fixture import SPEC_PATH

        spec = load_spec(cfg.spec_path or SPEC_PATH)
    else:
        spec = load_spec(cfg.spec_path)
    rpg = build_initial_rpg(spec)
    if transport is None:
        transport = FixtureTransport() if cfg.fixture else HttpTransport(cfg.base_url, cfg.timeout)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    start = time.monotonic()
    deadline = start + cfg.budget

    no_rpg = cfg.ablation == "no-rpg"
    learn = cfg.ablation != "rpg-only"
    strategy = StrategyConfig(p_reuse=cfg.p_reuse, p_spec=cfg.p_spec, use_bindings=not no_rpg)
    exec_cfg = ExecConfig(strategy=strategy, headers=dict(cfg.headers))
    gen_cfg = GenConfig(cfg.max_sequence_length, cfg.max_sequences_per_schema, seed=cfg.seed)
    fb_cfg = FeedbackConfig(theta=cfg.theta, reinstate_cooldown=cfg.reinstate_cooldown)
    pool = ValuePool(cfg.seed)
    seq_rng = random.Random(f"sequences:{cfg.seed}")
    evidence = EquivalenceEvidence()
    metrics = RunMetrics(operation_count=len(rpg.operation_nodes))
    bugs = BugCollector()
    op_ids = sorted(rpg.operation_nodes)

    stop_reason = "round-quota"
    seq_id = 0
    round_no = 0
    replay_out = AtomicLineWriter(out / ARTIFACTS["replay"])
    feedback_out = AtomicLineWriter(out / ARTIFACTS["feedback_log"])
    try:
        while cfg.round_quota is None or round_no < cfg.round_quota:
            if time.monotonic() >= deadline:
                stop_reason = "budget"
                break
            round_no += 1
            if no_rpg:
                plan = random_sequences(op_ids, cfg.sequences_per_round, cfg.max_sequence_length, seq_rng)
            else:
                plan = schedule(generate_call_sequences(rpg, gen_cfg), rpg, cfg.sequences_per_round)
            for seq in plan:
                if time.monotonic() >= deadline:
                    stop_reason = "budget"
                    break
                observations = _execute(seq, transport, rpg, spec, pool, exec_cfg, seq_id, metrics)
                for obs in observations:
                    metrics.record(obs)
                    if obs.sent:
                        replay_out.write(replay_line(obs))
                bugs.add_sequence(observations)
                if learn:
                    for obs in observations:
                        mutations = ingest(rpg, obs, evidence, fb_cfg, round_no)
                        _log_mutations(feedback_out, metrics, mutations, round_no, obs.id)
                seq_id += 1
            if learn:
                _log_mutations(feedback_out, metrics, maybe_reinstate(rpg, round_no, fb_cfg), round_no, None)
            metrics.checkpoint(round_no)
            if stop_reason == "budget":
                break
    except BaseException:
        replay_out.abort()
        feedback_out.abort()
        raise
    replay_out.close()
    feedback_out.close()

    found = bugs.bugs()
    with AtomicLineWriter(out / ARTIFACTS["bugs_replay"]) as bug_out:
        for bug in found:
            for line in bug.minimal_replay:
                bug_out.write(dict(line, bug_id=bug.bug_id))
    write_atomic(out / ARTIFACTS["rpg_json"], rpg.dumps() + "\n")
    write_atomic(out / ARTIFACTS["rpg_dot"], rpg.to_dot())
    timing = {
        "started_at": started_at,
        "elapsed_seconds": round(time.monotonic() - start, 3),
        "stop_reason": stop_reason,
    }
    artifacts = {k: v for k, v in ARTIFACTS.items() if k != "report"}
    emit_report(metrics, found, rpg, out / ARTIFACTS["report"], config=cfg.echo(), seed=cfg.seed,
                timing=timing, artifacts=artifacts)
    report = json.loads((out / ARTIFACTS["report"]).read_text("utf-8"))
    exit_code = 2 if found and cfg.fail_on_bugs else 0
    log.info("run finished: %d rounds, SRO %d/%d, %d bugs", round_no, len(metrics.sro),
             metrics.operation_count, len(found))
    return RunResult(exit_code, report, out)


def _execute(seq: CallSequence, transport, rpg, spec, pool, exec_cfg, seq_id, metrics) -> list:
    try:
        observations = execute_sequence(seq, transport, rpg, spec, pool, exec_cfg, sequence_id=seq_id)
    except SequenceAbortedError as exc:
        log.warning("%s", exc)
        metrics.sequences_aborted += 1
        observations = exc.observations
    metrics.sequences_executed += 1
    return observations


def _log_mutations(writer: AtomicLineWriter, metrics: RunMetrics, mutations: list, round_no: int, obs_id) -> None:
    metrics.record_mutations(mutations)
    for m in mutations:
        writer.write(mutation_record(m, round_no, obs_id))
