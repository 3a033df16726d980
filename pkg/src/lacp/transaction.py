"""Transactional guarantees: replay protection and two-phase commit.

ReplayGuard enforces idempotency by tracking transaction ids that have
already been processed. A repeated id is a Duplicate (maps to status 409);
a timestamp outside the freshness window is Stale (maps to 400). The
check-and-insert step is atomic under concurrent callers.

Coordinator/Participant implement classic presumed-abort two-phase commit.
Control messages ride inside the core grammar as ACT payloads with
reserved "__txn.*" tool names, so the wire surface never leaves the
semantic layer.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Mapping

from .errors import InvalidTransition
from .semantic import SemanticPayload, act

DEFAULT_FRESHNESS_WINDOW = 300.0
DEFAULT_RETENTION = 86_400.0

# tool names reserved for transaction control
TXN_TOOL_PREFIX = "__txn."


class ReplayOutcome(Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"
    STALE = "stale"


class ReplayGuard:
    """Set of seen transaction ids with freshness and retention policy.

    retention should be at least the freshness window: entries may be
    evicted after ``retention`` seconds, and a configuration with
    retention < freshness_window leaves a replay hole (the attack harness
    demonstrates it deliberately).
    """

    def __init__(self, freshness_window: float = DEFAULT_FRESHNESS_WINDOW,
                 retention: float = DEFAULT_RETENTION):
        if freshness_window <= 0 or retention <= 0:
            raise ValueError("freshness_window and retention must be positive")
        self.freshness_window = freshness_window
        self.retention = retention
        self._seen: dict[str, float] = {}
        self._lock = threading.Lock()
        self._op_count = 0

    def __len__(self) -> int:
        return len(self._seen)

    def _evict(self, now: float) -> None:
        cutoff = now - self.retention
        stale_ids = [txn_id for txn_id, first_seen in self._seen.items()
                     if first_seen <= cutoff]
        for txn_id in stale_ids:
            del self._seen[txn_id]

    def check_and_record(self, transaction_id: str, timestamp: float,
                         now: float) -> ReplayOutcome:
        """Atomically test-and-insert a transaction id.

        ACCEPTED records the id; DUPLICATE means the id was already
        recorded within retention; STALE means the message timestamp is
        outside the freshness window (the id is not recorded).
        """
        with self._lock:
            self._op_count += 1
            if self._op_count % 1024 == 0:
                self._evict(now)
            first_seen = self._seen.get(transaction_id)
            if first_seen is not None:
                if now - first_seen <= self.retention:
                    return ReplayOutcome.DUPLICATE
                del self._seen[transaction_id]
            if abs(now - timestamp) > self.freshness_window:
                return ReplayOutcome.STALE
            self._seen[transaction_id] = now
            return ReplayOutcome.ACCEPTED


# --- two-phase commit --------------------------------------------------------

class TxnKind(Enum):
    PREPARE = "__txn.prepare"
    VOTE = "__txn.vote"
    COMMIT = "__txn.commit"
    ABORT = "__txn.abort"
    ACK = "__txn.ack"


class CoordinatorState(Enum):
    INIT = "init"
    PREPARING = "preparing"
    COMMITTED = "committed"
    ABORTED = "aborted"


class ParticipantState(Enum):
    IDLE = "idle"
    PREPARED = "prepared"
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class TxnControlMessage:
    kind: TxnKind
    txn_id: str
    sender: str
    recipient: str
    vote: bool | None = None          # only for VOTE
    body: Mapping[str, Any] | None = None  # ACT fields being made atomic, PREPARE only

    def to_payload(self, intent_id: str | None = None) -> SemanticPayload:
        """Render as an ACT payload so control traffic stays inside the
        core grammar."""
        params: dict[str, Any] = {"txn_id": self.txn_id}
        if self.vote is not None:
            params["vote"] = "yes" if self.vote else "no"
        if self.body is not None:
            params["body"] = dict(self.body)
        return act(intent_id=intent_id or f"txn-{self.txn_id}",
                   tool_call=self.kind.value, params=params)


def control_from_payload(payload: SemanticPayload, sender: str,
                         recipient: str) -> TxnControlMessage:
    tool_call = payload.fields.get("tool_call")
    try:
        kind = TxnKind(tool_call)
    except ValueError:
        raise ValueError(f"not a transaction control tool: {tool_call!r}")
    params = payload.fields["params"]
    vote = None
    if "vote" in params:
        vote = params["vote"] == "yes"
    return TxnControlMessage(kind=kind, txn_id=params["txn_id"], sender=sender,
                             recipient=recipient, vote=vote,
                             body=params.get("body"))


class Coordinator:
    """Presumed-abort 2PC coordinator for a single transaction.

    Enters COMMITTED only after a YES vote from every participant;
    any NO vote or the prepare timeout aborts. Terminal states are final.
    Retransmissions are available through ``outstanding``: PREPARE for
    silent voters while preparing, the decision for un-acked participants
    once terminal.
    """

    def __init__(self, txn_id: str, node_id: str, prepare_timeout: float = 5.0):
        self.txn_id = txn_id
        self.node_id = node_id
        self.prepare_timeout = prepare_timeout
        self.state = CoordinatorState.INIT
        self.participants: tuple[str, ...] = ()
        self.body: Mapping[str, Any] | None = None
        self.votes: dict[str, bool] = {}
        self.acked: set[str] = set()
        self.deadline: float | None = None

    def start(self, participants: tuple[str, ...] | list[str],
              body: Mapping[str, Any] | None, now: float) -> list[TxnControlMessage]:
        if self.state is not CoordinatorState.INIT:
            raise InvalidTransition(self.state, "start")
        if not participants:
            raise ValueError("at least one participant required")
        self.participants = tuple(participants)
        self.body = body
        self.state = CoordinatorState.PREPARING
        self.deadline = now + self.prepare_timeout
        return [TxnControlMessage(TxnKind.PREPARE, self.txn_id, self.node_id, p,
                                  body=body)
                for p in self.participants]

    def on_vote(self, participant: str, vote_yes: bool) -> list[TxnControlMessage]:
        if self.state in (CoordinatorState.COMMITTED, CoordinatorState.ABORTED):
            # late vote after the decision (reordered PREPARE): repeat the
            # decision so the voter cannot stay prepared forever
            kind = (TxnKind.COMMIT if self.state is CoordinatorState.COMMITTED
                    else TxnKind.ABORT)
            return [TxnControlMessage(kind, self.txn_id, self.node_id, participant)]
        if self.state is not CoordinatorState.PREPARING:
            raise InvalidTransition(self.state, "vote")
        if participant not in self.participants:
            raise InvalidTransition(self.state, f"vote from unknown {participant!r}")
        self.votes[participant] = vote_yes
        if not vote_yes:
            return self._decide(CoordinatorState.ABORTED)
        if len(self.votes) == len(self.participants) and all(self.votes.values()):
            return self._decide(CoordinatorState.COMMITTED)
        return []

    def on_timeout(self, now: float) -> list[TxnControlMessage]:
        """Prepare-phase timeout: abort if any vote is still missing."""
        if self.state is not CoordinatorState.PREPARING:
            return []
        if self.deadline is not None and now < self.deadline:
            return []
        return self._decide(CoordinatorState.ABORTED)

    def on_ack(self, participant: str) -> None:
        if participant in self.participants:
            self.acked.add(participant)

    def _decide(self, state: CoordinatorState) -> list[TxnControlMessage]:
        self.state = state
        kind = TxnKind.COMMIT if state is CoordinatorState.COMMITTED else TxnKind.ABORT
        return [TxnControlMessage(kind, self.txn_id, self.node_id, p)
                for p in self.participants]

    def outstanding(self) -> list[TxnControlMessage]:
        """Messages to retransmit given the current state."""
        if self.state is CoordinatorState.PREPARING:
            return [TxnControlMessage(TxnKind.PREPARE, self.txn_id, self.node_id, p,
                                      body=self.body)
                    for p in self.participants if p not in self.votes]
        if self.state is CoordinatorState.COMMITTED:
            kind = TxnKind.COMMIT
        elif self.state is CoordinatorState.ABORTED:
            kind = TxnKind.ABORT
        else:
            return []
        return [TxnControlMessage(kind, self.txn_id, self.node_id, p)
                for p in self.participants if p not in self.acked]

    @property
    def done(self) -> bool:
        terminal = self.state in (CoordinatorState.COMMITTED, CoordinatorState.ABORTED)
        return terminal and self.acked >= set(self.participants)


class Participant:
    """2PC participant for a single transaction.

    PREPARE is idempotent (re-votes while prepared); COMMIT applies the
    held body exactly once via the ``apply`` callback; duplicate COMMIT or
    ABORT in a terminal state is absorbed with a fresh ACK.
    """

    def __init__(self, txn_id: str, node_id: str,
                 apply: Callable[[Mapping[str, Any] | None], None] | None = None,
                 can_execute: Callable[[Mapping[str, Any] | None], bool] | None = None):
        self.txn_id = txn_id
        self.node_id = node_id
        self.state = ParticipantState.IDLE
        self._apply = apply
        self._can_execute = can_execute
        self._pending_body: Mapping[str, Any] | None = None
        self.apply_count = 0
        self._voted_no = False

    def step(self, message: TxnControlMessage) -> list[TxnControlMessage]:
        if message.txn_id != self.txn_id:
            raise InvalidTransition(self.state, f"message for txn {message.txn_id!r}")
        coordinator = message.sender
        if message.kind is TxnKind.PREPARE:
            return self._on_prepare(message, coordinator)
        if message.kind is TxnKind.COMMIT:
            return self._on_commit(coordinator)
        if message.kind is TxnKind.ABORT:
            return self._on_abort(coordinator)
        raise InvalidTransition(self.state, message.kind)

    def _vote(self, coordinator: str, yes: bool) -> list[TxnControlMessage]:
        return [TxnControlMessage(TxnKind.VOTE, self.txn_id, self.node_id,
                                  coordinator, vote=yes)]

    def _ack(self, coordinator: str) -> list[TxnControlMessage]:
        return [TxnControlMessage(TxnKind.ACK, self.txn_id, self.node_id, coordinator)]

    def _on_prepare(self, message: TxnControlMessage, coordinator: str):
        if self.state is ParticipantState.PREPARED:
            return self._vote(coordinator, True)  # duplicate PREPARE: re-vote
        if self.state is not ParticipantState.IDLE:
            # decision already taken; remind the coordinator
            return self._ack(coordinator)
        if self._voted_no:
            return self._vote(coordinator, False)
        executable = self._can_execute(message.body) if self._can_execute else True
        if not executable:
            self._voted_no = True
            return self._vote(coordinator, False)
        self._pending_body = message.body
        self.state = ParticipantState.PREPARED
        return self._vote(coordinator, True)

    def _on_commit(self, coordinator: str):
        if self.state is ParticipantState.COMMITTED:
            return self._ack(coordinator)
        if self.state is not ParticipantState.PREPARED:
            raise InvalidTransition(self.state, TxnKind.COMMIT)
        if self._apply is not None:
            self._apply(self._pending_body)
        self.apply_count += 1
        self._pending_body = None
        self.state = ParticipantState.COMMITTED
        return self._ack(coordinator)

    def _on_abort(self, coordinator: str):
        if self.state in (ParticipantState.ABORTED, ParticipantState.IDLE):
            return self._ack(coordinator)  # idempotent abort, also for non-voters
        if self.state is ParticipantState.COMMITTED:
            raise InvalidTransition(self.state, TxnKind.ABORT)
        self._pending_body = None
        self.state = ParticipantState.ABORTED
        return self._ack(coordinator)

    @property
    def holds_pending_work(self) -> bool:
        return self.state is ParticipantState.PREPARED


class TxnParticipantHost:
    """Routes reserved "__txn.*" ACTs arriving at a node into per-transaction
    participant machines; the emitted VOTE or ACK rides back as the OBSERVE
    output, so the whole exchange stays inside the core grammar.

    A participant that holds prepared work refuses to prepare a second
    transaction until the first resolves.
    """

    def __init__(self, node_id: str,
                 apply: Callable[[Mapping[str, Any] | None], None] | None = None,
                 can_execute: Callable[[Mapping[str, Any] | None], bool] | None = None):
        self.node_id = node_id
        self._apply = apply
        self._can_execute = can_execute
        self._participants: dict[str, Participant] = {}
        self._lock = threading.Lock()

    def _busy_with_other(self, txn_id: str) -> bool:
        return any(p.holds_pending_work for other_id, p in self._participants.items()
                   if other_id != txn_id)

    def participant(self, txn_id: str) -> Participant | None:
        return self._participants.get(txn_id)

    def handle(self, claims) -> tuple[int, dict[str, Any]]:
        """(status_code, OBSERVE output) for one verified control ACT."""
        try:
            message = control_from_payload(claims.payload, sender=claims.sender,
                                           recipient=self.node_id)
        except (ValueError, KeyError) as exc:
            return 400, {"error": f"bad control message: {exc}"}
        with self._lock:
            if message.kind is TxnKind.PREPARE and \
                    message.txn_id not in self._participants and \
                    self._busy_with_other(message.txn_id):
                return 200, {"txn_id": message.txn_id,
                             "reply": TxnKind.VOTE.value, "vote": "no",
                             "note": "holding prepared work for another transaction"}
            participant = self._participants.get(message.txn_id)
            if participant is None:
                participant = Participant(message.txn_id, self.node_id,
                                          apply=self._apply,
                                          can_execute=self._can_execute)
                self._participants[message.txn_id] = participant
            try:
                replies = participant.step(message)
            except InvalidTransition as exc:
                return 400, {"txn_id": message.txn_id, "error": str(exc)}
        reply = replies[0]
        output: dict[str, Any] = {"txn_id": reply.txn_id, "reply": reply.kind.value}
        if reply.vote is not None:
            output["vote"] = "yes" if reply.vote else "no"
        return 200, output
