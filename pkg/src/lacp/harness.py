"""Desk-scale experiment harness: size/latency benchmark against an
unsecured baseline, and the tampering/replay attack simulators.

The baseline carries the same addressed message (identical claims, plain
canonical JSON, no signature, no base64) to an endpoint that echoes the
payload without any verification. The secured path sends the signed
compact envelope through the full node pipeline. Overhead percentages
therefore isolate exactly what the security layer costs.

Latency is wall-clock per request over the in-process loopback, medians
over all iterations; absolute milliseconds are machine-specific, ratios
are the interesting output.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from . import envelope as env
from . import semantic
from .errors import (
    HarnessTransportFailure,
    LacpError,
    ScenarioTooLarge,
    TransportClosed,
    TransportTimeout,
)
from .framing import CLASS_REQUEST, CLASS_RESPONSE, MAX_BODY, Frame
from .node import Node, ToolRegistry, builtin_calculator, echo_tool
from .transaction import ReplayGuard
from .transport import LoopbackTransport, TcpClientTransport

# payload byte targets from the reference experiment: a heartbeat-sized
# message, a small tool call, and a complex multi-step plan
DEFAULT_SCENARIO_SIZES = (("small", 51), ("medium", 151), ("large", 1964))


# --- scenario construction ----------------------------------------------------

def make_act_scenario(name: str, target_bytes: int) -> "Scenario":
    """Build an echo ACT whose canonical encoding hits target_bytes.

    The grammar has a floor: the smallest valid ACT is 58 bytes, so
    targets below that are built at the floor and the actual size is
    reported (the report never lies about what was measured).
    """
    if target_bytes > MAX_BODY:
        raise ScenarioTooLarge(f"{name}: {target_bytes} bytes exceeds the frame cap")
    floor = semantic.act(intent_id="a", tool_call="e", params={})
    floor_size = len(semantic.encode_payload(floor))
    if target_bytes <= floor_size:
        return Scenario(name=name, target_bytes=target_bytes, payload=floor)
    with_pad = semantic.act(intent_id="a", tool_call="e", params={"pad": ""})
    pad_needed = target_bytes - len(semantic.encode_payload(with_pad))
    if pad_needed < 0:
        return Scenario(name=name, target_bytes=target_bytes, payload=floor)
    payload = semantic.act(intent_id="a", tool_call="e",
                           params={"pad": "x" * pad_needed})
    assert len(semantic.encode_payload(payload)) == target_bytes
    return Scenario(name=name, target_bytes=target_bytes, payload=payload)


@dataclass
class Scenario:
    name: str
    target_bytes: int
    payload: semantic.SemanticPayload

    @property
    def payload_bytes(self) -> int:
        return len(semantic.encode_payload(self.payload))


def default_scenarios() -> list[Scenario]:
    return [make_act_scenario(name, size) for name, size in DEFAULT_SCENARIO_SIZES]


# --- benchmark ----------------------------------------------------------------

@dataclass
class ScenarioResult:
    name: str
    payload_bytes: int
    baseline_bytes: int
    lacp_bytes: int
    size_overhead_pct: float
    baseline_latency_ms: float
    lacp_latency_ms: float
    latency_overhead_pct: float
    iterations: int


@dataclass
class BenchReport:
    iterations: int
    results: list[ScenarioResult] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"iterations": self.iterations,
                "scenarios": [vars(r) for r in self.results]}

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def render_table(self) -> str:
        header = (f"{'scenario':<10} {'payload':>8} {'baseline':>9} {'secured':>8} "
                  f"{'size +%':>8} {'base ms':>9} {'lacp ms':>9} {'lat +%':>7}")
        lines = [header, "-" * len(header)]
        for r in self.results:
            lines.append(
                f"{r.name:<10} {r.payload_bytes:>8} {r.baseline_bytes:>9} "
                f"{r.lacp_bytes:>8} {r.size_overhead_pct:>8.1f} "
                f"{r.baseline_latency_ms:>9.4f} {r.lacp_latency_ms:>9.4f} "
                f"{r.latency_overhead_pct:>7.1f}")
        lines.append(f"iterations per scenario: {self.iterations}")
        return "\n".join(lines)


def _baseline_echo_handler(frame: Frame) -> Frame:
    """The unsecured endpoint: parse, pull the payload out, echo it back.
    No verification, no replay tracking, no signing."""
    message = json.loads(frame.body.decode("utf-8"))
    return Frame(frame_class=CLASS_RESPONSE,
                 body=semantic.canonical_bytes(message["payload"]))


def _bench_identities() -> tuple[env.AgentIdentity, env.AgentIdentity, env.Keystore]:
    client_id = env.keygen("c")
    server_id = env.keygen("s")
    keystore = env.Keystore([client_id, server_id])
    return client_id, server_id, keystore


def bench_run(scenarios: list[Scenario] | None = None,
              iterations: int = 10_000,
              warmup: int = 50) -> BenchReport:
    """Measure baseline vs secured size and latency per scenario."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    scenarios = scenarios if scenarios is not None else default_scenarios()

    client_identity, server_identity, keystore = _bench_identities()
    registry = ToolRegistry()
    registry.register("e", echo_tool)
    registry.register("echo", echo_tool)
    registry.register("calculator", builtin_calculator)
    # generous freshness so a long benchmark never goes stale mid-run
    node = Node(server_identity, keystore, registry=registry,
                guard=ReplayGuard(freshness_window=3600.0, retention=7200.0))

    report = BenchReport(iterations=iterations)
    for scenario in scenarios:
        if scenario.payload_bytes > MAX_BODY:
            raise ScenarioTooLarge(scenario.name)
        result = _run_scenario(scenario, node, client_identity, server_identity,
                               keystore, iterations, warmup)
        report.results.append(result)
    return report


def _run_scenario(scenario: Scenario, node: Node,
                  client_identity: env.AgentIdentity,
                  server_identity: env.AgentIdentity,
                  keystore: env.Keystore,
                  iterations: int, warmup: int) -> ScenarioResult:
    payload = scenario.payload
    sequence = 0

    def build_claims() -> env.EnvelopeClaims:
        nonlocal sequence
        sequence += 1
        return env.EnvelopeClaims(
            sender=client_identity.agent_id,
            recipient=server_identity.agent_id,
            transaction_id=env.new_transaction_id(),
            sequence=sequence,
            timestamp=int(time.time()),
            payload=payload,
        )

    # sizes come from one representative message of each kind
    sample = build_claims()
    baseline_bytes = len(env.encode_claims(sample))
    lacp_bytes = len(env.compact_encode(env.sign_envelope(sample, client_identity)))

    def baseline_iteration() -> None:
        body = env.encode_claims(build_claims())
        response = _baseline_echo_handler(Frame(CLASS_REQUEST, body))
        json.loads(response.body.decode("utf-8"))

    def lacp_iteration() -> None:
        signed = env.sign_envelope(build_claims(), client_identity)
        frame = Frame(CLASS_REQUEST, env.compact_encode(signed).encode("utf-8"))
        response = node.handle_frame(frame)
        if response.status_code != 200:
            raise HarnessTransportFailure(
                f"benchmark request rejected with {response.status_code}")
        env.verify_envelope(response.envelope, keystore)

    baseline_latencies = _time_iterations(baseline_iteration, iterations, warmup)
    lacp_latencies = _time_iterations(lacp_iteration, iterations, warmup)

    baseline_ms = statistics.median(baseline_latencies) * 1e3
    lacp_ms = statistics.median(lacp_latencies) * 1e3
    return ScenarioResult(
        name=scenario.name,
        payload_bytes=scenario.payload_bytes,
        baseline_bytes=baseline_bytes,
        lacp_bytes=lacp_bytes,
        size_overhead_pct=(lacp_bytes - baseline_bytes) / baseline_bytes * 100.0,
        baseline_latency_ms=baseline_ms,
        lacp_latency_ms=lacp_ms,
        latency_overhead_pct=(lacp_ms - baseline_ms) / baseline_ms * 100.0,
        iterations=iterations,
    )


def _time_iterations(fn: Callable[[], None], iterations: int, warmup: int) -> list[float]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iterations):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return samples


# --- attack simulators ----------------------------------------------------------

@dataclass
class AttackReport:
    name: str
    passed: bool
    first_status: int | None
    second_status: int | None
    effect_count: int | None
    notes: str = ""

    def render(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        effects = "n/a" if self.effect_count is None else str(self.effect_count)
        return (f"attack={self.name} verdict={verdict} "
                f"first={self.first_status} second={self.second_status} "
                f"effects={effects}" + (f" note={self.notes}" if self.notes else ""))


class AttackTarget:
    """What the simulators need to hit a node: a transport factory plus the
    attacker's signing identity. ``effect_counter`` is available only for
    in-process targets; remote targets report statuses alone."""

    def __init__(self, transport_factory: Callable[[], Any],
                 keystore: env.Keystore, attacker: env.AgentIdentity,
                 server_id: str,
                 effect_counter: Callable[[], int] | None = None,
                 clock: Callable[[], float] = time.time):
        self.transport_factory = transport_factory
        self.keystore = keystore
        self.attacker = attacker
        self.server_id = server_id
        self.effect_counter = effect_counter
        self.clock = clock


def make_loopback_target(verify_signatures: bool = True,
                         replay_protection: bool = True,
                         freshness_window: float = 300.0,
                         retention: float = 86_400.0,
                         clock: Callable[[], float] = time.time) -> AttackTarget:
    """A stock (or deliberately weakened) in-process node hosting the
    "transfer" tool with an observable effect counter."""
    attacker = env.keygen("attacker-client")
    server = env.keygen("victim-server")
    keystore = env.Keystore([attacker, server])
    registry = ToolRegistry()
    effects = {"transfer": 0}

    def transfer_tool(params: Mapping[str, Any], deadline: float | None = None) -> tuple:
        effects["transfer"] += 1
        return ("ok", f"transferred {params.get('amount')}")

    registry.register("transfer", transfer_tool)
    registry.register("calculator", builtin_calculator)
    node = Node(server, keystore, registry=registry,
                guard=ReplayGuard(freshness_window, retention), clock=clock,
                verify_signatures=verify_signatures,
                replay_protection=replay_protection)
    return AttackTarget(transport_factory=lambda: LoopbackTransport(node.frame_handler),
                        keystore=keystore, attacker=attacker,
                        server_id=server.agent_id,
                        effect_counter=lambda: effects["transfer"],
                        clock=clock)


def make_tcp_target(host: str, port: int, keystore: env.Keystore,
                    attacker_id: str, server_id: str) -> AttackTarget:
    attacker = keystore.get(attacker_id)
    if attacker is None or not attacker.can_sign:
        raise ValueError(f"attacker identity {attacker_id!r} needs a private key")
    return AttackTarget(transport_factory=lambda: TcpClientTransport(host, port),
                        keystore=keystore, attacker=attacker, server_id=server_id)


def _open_transport(target: AttackTarget):
    try:
        return target.transport_factory()
    except (TransportClosed, OSError) as exc:
        raise HarnessTransportFailure(str(exc)) from exc


def _send_compact(target: AttackTarget, transport, compact: str) -> int:
    """Push one compact envelope and return the node's status code."""
    try:
        transport.send(Frame(CLASS_REQUEST, compact.encode("utf-8")))
        response = transport.receive(timeout=5.0)
    except (TransportTimeout, TransportClosed) as exc:
        raise HarnessTransportFailure(str(exc)) from exc
    body = response.body
    if body.startswith(b"status:"):
        return int(body[7:])
    try:
        claims = env.verify_envelope(env.compact_decode(body.decode("utf-8")),
                                     target.keystore)
    except LacpError as exc:
        raise HarnessTransportFailure(f"unverifiable response: {exc}") from exc
    code = claims.payload.get("status_code")
    return code if isinstance(code, int) else (200 if claims.payload.get("status") == "ok" else 400)


def _signed_transfer(target: AttackTarget, amount: int) -> str:
    claims = env.EnvelopeClaims(
        sender=target.attacker.agent_id,
        recipient=target.server_id,
        transaction_id=env.new_transaction_id(),
        sequence=0,
        timestamp=target.clock(),
        payload=semantic.act(intent_id=env.new_transaction_id(),
                             tool_call="transfer", params={"amount": amount}),
    )
    return env.compact_encode(env.sign_envelope(claims, target.attacker))


def tamper_compact(compact: str, old: bytes, new: bytes) -> str:
    """Rewrite the claims segment after signing, keeping the old signature."""
    header_b64, claims_b64, sig_b64 = compact.split(".")
    claims = env.b64url_decode(claims_b64)
    mutated = claims.replace(old, new, 1)
    if mutated == claims:
        raise ValueError(f"pattern {old!r} not found in claims")
    return ".".join((header_b64, env.b64url_encode(mutated), sig_b64))


def attack_tamper(target: AttackTarget) -> AttackReport:
    """Send a valid transfer, then the same envelope with the amount
    inflated after signing. The node must accept the first (200) and
    reject the mutation (403) without executing anything for it."""
    transport = _open_transport(target)
    try:
        before = target.effect_counter() if target.effect_counter else None
        valid = _signed_transfer(target, 100)
        first = _send_compact(target, transport, valid)
        tampered = tamper_compact(valid, b'"amount":100', b'"amount":10000')
        second = _send_compact(target, transport, tampered)
    finally:
        transport.close()
    effects = (target.effect_counter() - before) if target.effect_counter else None
    passed = first == 200 and second == 403 and effects in (None, 1)
    notes = "" if passed else "tampered message was not rejected with 403"
    if effects not in (None, 1):
        notes = f"tool executed {effects} times, expected 1"
    return AttackReport("tamper", passed, first, second, effects, notes)


def attack_replay(target: AttackTarget,
                  resend_clock: Callable[[], float] | None = None) -> AttackReport:
    """Send a valid message, then re-send the byte-identical copy. The
    node must process the first (200) and refuse the duplicate (409)."""
    transport = _open_transport(target)
    try:
        before = target.effect_counter() if target.effect_counter else None
        valid = _signed_transfer(target, 100)
        first = _send_compact(target, transport, valid)
        second = _send_compact(target, transport, valid)
    finally:
        transport.close()
    effects = (target.effect_counter() - before) if target.effect_counter else None
    passed = first == 200 and second == 409 and effects in (None, 1)
    notes = ""
    if not passed:
        notes = "duplicate was not rejected with 409"
        if second == 200:
            notes += " (replay window open: retention shorter than resend gap?)"
    if effects not in (None, 1):
        notes = f"tool executed {effects} times, expected 1"
    return AttackReport("replay", passed, first, second, effects, notes)
