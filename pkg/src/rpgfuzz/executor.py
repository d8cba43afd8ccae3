"""Run call sequences against a transport and record what came back."""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

from .errors import SequenceAbortedError, UnboundRequiredPathParamError
from .paramgen import BindingContext, ConcreteRequest, StrategyConfig, ValuePool, next_request
from .rpg import Rpg
from .seqgen import CallSequence
from .spec_model import ServiceSpec

TRANSPORT_FAILURE_STATUS = 0


class Outcome(str, enum.Enum):
    SUCCESS = "Success2xx"
    CLIENT_ERROR = "ClientError4xx"
    SERVER_ERROR = "ServerError5xx"
    OTHER = "Other"
    TRANSPORT_FAILURE = "TransportFailure"


def classify(status: int) -> Outcome:
    if 200 <= status <= 299:
        return Outcome.SUCCESS
    if 400 <= status <= 499:
        return Outcome.CLIENT_ERROR
    if 500 <= status <= 599:
        return Outcome.SERVER_ERROR
    return Outcome.OTHER


@dataclass
class RawResponse:
    status: int
    body: bytes = b""
    headers: dict = field(default_factory=dict)
    latency: float = 0.0
    transport_error: Optional[str] = None

    @property
    def failed_transport(self) -> bool:
        return self.transport_error is not None

    def json(self) -> Any:
        """Parsed JSON body, or None when the body is empty or not JSON."""
        if not self.body:
            return None
        try:
            return json.loads(self.body.decode("utf-8"))
        except (UnicodeDecodeError, ValueError):
            return None


class Transport(Protocol):
    def send(self, request: ConcreteRequest) -> RawResponse: ...


class HttpTransport:
    """Blocking HTTP/1.1 client; a timeout or connection error becomes a transport failure."""

    def __init__(self, base_url: str, timeout: float = 10.0, headers: Optional[dict] = None):
        import requests

        self._requests = requests
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()
        self.session.headers.update(headers or {})

    def send(self, request: ConcreteRequest) -> RawResponse:
        data = None if request.body is None else json.dumps(request.body).encode("utf-8")
        start = time.monotonic()
        try:
            resp = self.session.request(
                request.method,
                self.base_url + request.url,
                data=data,
                headers=request.headers,
                timeout=self.timeout,
                allow_redirects=False,
            )
        except self._requests.RequestException as exc:
            return RawResponse(TRANSPORT_FAILURE_STATUS, latency=time.monotonic() - start,
                               transport_error=type(exc).__name__)
        return RawResponse(resp.status_code, resp.content, dict(resp.headers), time.monotonic() - start)


class FixtureTransport:
    """In-process dispatch to the Petstore fixture; no sockets involved."""

    def __init__(self, state=None):
        from .fixture.petstore import FixtureState

        self.state = state if state is not None else FixtureState()

    def send(self, request: ConcreteRequest) -> RawResponse:
        from .fixture.petstore import handle

        start = time.monotonic()
        resp = handle(request, self.state)
        resp.latency = time.monotonic() - start
        return resp


@dataclass
class Observation:
    sequence_id: int
    step_index: int
    operation_id: str
    request: Optional[ConcreteRequest]
    response: Optional[RawResponse]
    outcome: Outcome
    bindings_used: bool
    parsed_body: Any = None
    error: Optional[str] = None

    @property
    def id(self) -> str:
        return f"{self.sequence_id}:{self.step_index}"

    @property
    def status(self) -> int:
        return self.response.status if self.response is not None else TRANSPORT_FAILURE_STATUS

    @property
    def sent(self) -> bool:
        return self.request is not None and self.response is not None


@dataclass
class ExecConfig:
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    headers: dict = field(default_factory=dict)
    abort_after_transport_failures: int = 3

    def __post_init__(self):
        if self.abort_after_transport_failures < 1:
            raise ValueError("abort_after_transport_failures must be >= 1")


def execute_sequence(seq: CallSequence, transport: Transport, rpg: Rpg, spec: ServiceSpec, pool: ValuePool,
                     cfg: Optional[ExecConfig] = None, sequence_id: int = 0) -> list[Observation]:
    cfg = cfg or ExecConfig()
    ctx = BindingContext()
    observations: list[Observation] = []
    transport_failures = 0
    for step, op in enumerate(seq.operations):
        try:
            request = next_request(op, rpg, spec, ctx, pool, cfg.strategy)
        except UnboundRequiredPathParamError as exc:
            observations.append(Observation(sequence_id, step, op, None, None, Outcome.OTHER, False, error=str(exc)))
            continue
        for name, value in cfg.headers.items():
            request.headers.setdefault(name, value)
        response = transport.send(request)
        if response.failed_transport:
            outcome = Outcome.TRANSPORT_FAILURE
            transport_failures += 1
        else:
            outcome = classify(response.status)
            transport_failures = 0
        parsed = response.json()
        observations.append(
            Observation(sequence_id, step, op, request, response, outcome, request.bindings_used, parsed)
        )
        if outcome is Outcome.SUCCESS:
            pool.record_success(request)
            ctx.add(step, op, parsed)
        if transport_failures >= cfg.abort_after_transport_failures:
            raise SequenceAbortedError(
                f"sequence {sequence_id} aborted after {transport_failures} transport failures", observations
            )
    return observations
