"""Deterministic fault-injection runner for two-phase commit.

One coordinator and N participants exchange control messages over a
simulated network driven by a virtual clock and a seeded fault plan.
Each transmission can be dropped, duplicated or delayed; drops per
message are capped so delivery is eventually guaranteed, except for
deliberately muted senders (used to demonstrate timeout-aborts under
total silence).

Control messages cross the simulated wire in their ACT-payload form, the
same rendering real nodes use, so the mapping in and out of the core
grammar is exercised on every hop.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

from .semantic import decode_payload, encode_payload
from .transaction import (
    Coordinator,
    CoordinatorState,
    Participant,
    ParticipantState,
    TxnControlMessage,
    TxnKind,
    control_from_payload,
)


@dataclass
class FaultPlan:
    """Seeded per-transmission faults with structurally bounded drops."""

    seed: int = 0
    drop_rate: float = 0.0
    dup_rate: float = 0.0
    max_delay: float = 0.0
    max_drops_per_message: int = 3
    mute: frozenset[str] = frozenset()   # senders whose messages never arrive

    def __post_init__(self):
        self.rng = random.Random(self.seed)
        self._drops: dict[tuple, int] = {}

    def fate(self, message: TxnControlMessage) -> tuple[bool, list[float]]:
        """(delivered?, delay for each delivered copy)"""
        if message.sender in self.mute:
            return False, []
        key = (message.kind, message.sender, message.recipient)
        if self.rng.random() < self.drop_rate and \
                self._drops.get(key, 0) < self.max_drops_per_message:
            self._drops[key] = self._drops.get(key, 0) + 1
            return False, []
        delays = [self.rng.uniform(0.0, self.max_delay) if self.max_delay else 0.0]
        if self.rng.random() < self.dup_rate:
            delays.append(self.rng.uniform(0.0, self.max_delay) if self.max_delay else 0.0)
        return True, delays


@dataclass
class TxnReport:
    seed: int
    participants: int
    coordinator_state: str
    participant_states: dict[str, str]
    apply_counts: dict[str, int]
    violations: list[str]
    terminated: bool
    delivered: int
    dropped: int
    sim_time: float

    @property
    def agreement_ok(self) -> bool:
        return not any(v.startswith("agreement") for v in self.violations)

    @property
    def exactly_once_ok(self) -> bool:
        return not any(v.startswith("exactly-once") for v in self.violations)

    @property
    def passed(self) -> bool:
        return not self.violations

    def render(self) -> str:
        lines = [
            f"txn-sim seed={self.seed} participants={self.participants} "
            f"coordinator={self.coordinator_state} terminated={self.terminated}",
            f"  states: {self.participant_states}",
            f"  applies: {self.apply_counts}",
            f"  delivered={self.delivered} dropped={self.dropped} sim_time={self.sim_time:.2f}s",
        ]
        lines.append("  violations: " + (", ".join(self.violations) or "none"))
        return "\n".join(lines)


class _SimNetwork:
    def __init__(self, plan: FaultPlan):
        self.plan = plan
        self.queue: list[tuple[float, int, str, object]] = []
        self._counter = 0
        self.delivered = 0
        self.dropped = 0

    def push(self, when: float, kind: str, item: object) -> None:
        self._counter += 1
        heapq.heappush(self.queue, (when, self._counter, kind, item))

    def transmit(self, now: float, message: TxnControlMessage) -> None:
        delivered, delays = self.plan.fate(message)
        if not delivered:
            self.dropped += 1
            return
        # round-trip through the wire rendering on every copy
        wire = encode_payload(message.to_payload())
        for delay in delays:
            self.push(now + delay, "deliver", (message.recipient, wire,
                                               message.sender, message.recipient))


def txn_fault_run(participants: int, seed: int = 0,
                  drop_rate: float = 0.0, dup_rate: float = 0.0,
                  max_delay: float = 0.0,
                  vote_no: frozenset[str] | set[str] = frozenset(),
                  mute: frozenset[str] | set[str] = frozenset(),
                  prepare_timeout: float = 5.0,
                  retransmit_interval: float = 1.0,
                  max_rounds: int = 50,
                  body: dict | None = None) -> TxnReport:
    """Run one transaction to quiescence and report terminal states.

    Invariant violations (agreement, exactly-once effects) are recorded
    in the report rather than raised, so sweeps can aggregate them.
    """
    if participants < 1:
        raise ValueError("need at least one participant")
    plan = FaultPlan(seed=seed, drop_rate=drop_rate, dup_rate=dup_rate,
                     max_delay=max_delay, mute=frozenset(mute))
    network = _SimNetwork(plan)
    body = body if body is not None else {"intent_id": "txn-demo", "tool_call": "echo",
                                          "params": {"value": "atomic"}}

    txn_id = f"{seed:032x}"[-32:]
    coordinator = Coordinator(txn_id, "coordinator", prepare_timeout=prepare_timeout)
    nodes: dict[str, Participant] = {}
    for i in range(participants):
        node_id = f"p{i}"
        nodes[node_id] = Participant(
            txn_id, node_id,
            can_execute=(lambda _b, _no=(node_id in vote_no): not _no))

    now = 0.0
    for message in coordinator.start(list(nodes), body, now):
        network.transmit(now, message)
    network.push(prepare_timeout, "timeout", None)
    network.push(retransmit_interval, "retransmit", 1)

    while network.queue:
        now, _, kind, item = heapq.heappop(network.queue)
        if kind == "deliver":
            recipient, wire, sender, _ = item
            message = control_from_payload(decode_payload(wire), sender, recipient)
            network.delivered += 1
            if recipient == "coordinator":
                if message.kind is TxnKind.VOTE:
                    out = coordinator.on_vote(message.sender, bool(message.vote))
                elif message.kind is TxnKind.ACK:
                    coordinator.on_ack(message.sender)
                    out = []
                else:
                    out = []
                for reply in out:
                    network.transmit(now, reply)
            else:
                for reply in nodes[recipient].step(message):
                    network.transmit(now, reply)
        elif kind == "timeout":
            for reply in coordinator.on_timeout(now):
                network.transmit(now, reply)
        elif kind == "retransmit":
            round_no = item
            if not coordinator.done and round_no < max_rounds:
                for message in coordinator.outstanding():
                    network.transmit(now, message)
                network.push(now + retransmit_interval, "retransmit", round_no + 1)

    states = {node_id: p.state.value for node_id, p in nodes.items()}
    applies = {node_id: p.apply_count for node_id, p in nodes.items()}
    violations: list[str] = []

    committed = {n for n, p in nodes.items() if p.state is ParticipantState.COMMITTED}
    aborted = {n for n, p in nodes.items() if p.state is ParticipantState.ABORTED}
    if committed and aborted:
        violations.append(f"agreement: committed={sorted(committed)} "
                          f"aborted={sorted(aborted)}")
    if coordinator.state is CoordinatorState.COMMITTED and \
            len(committed) != len(nodes):
        violations.append("agreement: coordinator committed but some participant did not")
    if coordinator.state is CoordinatorState.ABORTED and committed:
        violations.append("agreement: coordinator aborted but a participant committed")
    for node_id, count in applies.items():
        expected = 1 if nodes[node_id].state is ParticipantState.COMMITTED else 0
        if count != expected:
            violations.append(f"exactly-once: {node_id} applied {count} times "
                              f"(state {states[node_id]})")

    terminated = coordinator.state in (CoordinatorState.COMMITTED,
                                       CoordinatorState.ABORTED)
    terminated = terminated and not any(p.holds_pending_work for p in nodes.values())
    if not terminated:
        violations.append("termination: run left pending state behind")

    return TxnReport(seed=seed, participants=participants,
                     coordinator_state=coordinator.state.value,
                     participant_states=states, apply_counts=applies,
                     violations=violations, terminated=terminated,
                     delivered=network.delivered, dropped=network.dropped,
                     sim_time=now)
