"""Message-passing driver: party actors talk over a broadcast bus.

The quantum register lives in a single backplane.  Actors reach it only
through measurement requests made in their own name, so no actor can read
amplitudes or act on qubits it does not hold.  Scheduling is by logical
time; there is no wall clock.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from . import protocol_engine as pe
from .errors import ConfigurationError, InternalError, ProtocolOrderError
from .pauli_frame import ALICE
from .protocol_engine import MeasurementRecord, ProtocolConfig, RunReport
from .quantum_core import QubitRef
from .topology import receiver_swap_schedule

MESSAGE_KINDS = ("ORDER_DIRECTIVE", "ANNOUNCE", "TEST_REQUEST", "TEST_RESPONSE")
ROLES = ("sender", "controller", "receiver")


@dataclass(frozen=True)
class Message:
    kind: str
    sender: str
    payload: dict[str, Any]
    logical_time: int

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ConfigurationError(f"unknown message kind {self.kind!r}")
        if self.kind == "ANNOUNCE" and len(self.payload.get("bits", ())) != 2:
            raise ConfigurationError("ANNOUNCE carries exactly two bits")

    @property
    def bits(self) -> list[int]:
        return list(self.payload.get("bits", ()))

    def to_event(self) -> dict[str, Any]:
        return {"time": self.logical_time, "kind": self.kind, "sender": self.sender, "bits": self.bits}


@dataclass
class PartyActor:
    id: str
    role: str
    held_qubits: list[QubitRef] = field(default_factory=list)
    inbox: list[Message] = field(default_factory=list)
    knowledge: dict[int, MeasurementRecord] = field(default_factory=dict)

    def receive(self, msg: Message) -> None:
        self.inbox.append(msg)
        if msg.kind == "ANNOUNCE":
            record = msg.payload["record"]
            self.knowledge[record.sequence_number] = record

    def learn_own(self, record: MeasurementRecord) -> None:
        self.knowledge[record.sequence_number] = record


class Bus:
    """Broadcast queue ordered by logical time."""

    def __init__(self):
        self._heap: list[tuple[int, Message]] = []
        self._clock = itertools.count()
        self._last_delivered = -1
        self.subscribers: list[PartyActor] = []
        self.log: list[Message] = []

    def __len__(self) -> int:
        return len(self._heap)

    def post(self, kind: str, sender: str, payload: dict[str, Any] | None = None,
             time: int | None = None) -> Message:
        t = next(self._clock) if time is None else time
        if t <= self._last_delivered or any(t == m.logical_time for _, m in self._heap):
            raise ProtocolOrderError(f"logical time {t} is not free on the bus")
        msg = Message(kind, sender, dict(payload or {}), t)
        heapq.heappush(self._heap, (t, msg))
        return msg


def step_bus(bus: Bus) -> Message | None:
    """Deliver the earliest message to every subscriber; ``None`` when idle."""
    if not bus._heap:
        return None
    t, msg = heapq.heappop(bus._heap)
    if t <= bus._last_delivered:
        raise InternalError("bus delivery went back in time")
    bus._last_delivered = t
    for actor in bus.subscribers:
        actor.receive(msg)
    bus.log.append(msg)
    return msg


class Backplane:
    """Sole owner of the quantum register; every request names its actor."""

    def __init__(self, session: pe.Session):
        self._session = session

    @property
    def phase(self) -> str:
        return self._session.phase

    def held_by(self, actor: str) -> list[QubitRef]:
        return [q for q in self._session.state.qubits if q.owner == actor]

    def payload_holders(self) -> tuple[str, str]:
        return self._session.holders

    def feed(self, actor: str) -> tuple[MeasurementRecord, MeasurementRecord]:
        if actor != ALICE:
            raise ProtocolOrderError(f"{actor} cannot feed; only {ALICE} holds the payload")
        return pe.feed(self._session)

    def pass_share(self, actor: str) -> MeasurementRecord:
        return pe.pass_step(self._session, actor=actor)

    def swap(self, actor: str, new_receiver: str | None = None) -> MeasurementRecord:
        pe.entanglement_swap(self._session, actor, new_receiver)
        return self._session.transcript[-1]

    def next_passer(self) -> str:
        return self._session.carriers[pe._elder_slot(self._session)].owner

    def mark_announced(self, msg: Message) -> None:
        self._session.announce(msg.payload["record"].sequence_number, time=msg.logical_time)

    def log(self, msg: Message) -> None:
        self._session.log(msg.kind, msg.sender, msg.bits, time=msg.logical_time)

    def retrieve(self, actor: str, known: Iterable[MeasurementRecord]):
        if actor != self._session.route.receiver:
            raise ProtocolOrderError(f"{actor} is not the receiver")
        return pe.retrieve(self._session, known)

    def report(self, fidelity: float) -> RunReport:
        return pe.make_report(self._session, fidelity)


@dataclass
class Network:
    config: ProtocolConfig
    actors: dict[str, PartyActor]
    bus: Bus
    backplane: Backplane
    swap_schedule: tuple[str, ...] = ()

    @property
    def receiver(self) -> PartyActor:
        return next(a for a in self.actors.values() if a.role == "receiver")

    def refresh_holdings(self) -> None:
        for actor in self.actors.values():
            actor.held_qubits = self.backplane.held_by(actor.id)
        a, b = self.backplane.payload_holders()
        if a == b and a != ALICE and self.actors[a].role != "receiver":
            raise InternalError(f"controller {a} holds both payload qubits")

    def post_own(self, record: MeasurementRecord) -> None:
        """Measuring actor learns its outcome; under the immediate policy it also announces."""
        self.actors[record.actor].learn_own(record)
        if self.config.disclosure_policy == "immediate":
            self.announce(record)

    def announce(self, record: MeasurementRecord) -> None:
        self.bus.post("ANNOUNCE", record.actor, {"bits": list(record.bits), "record": record})
        self.drain()

    def drain(self) -> None:
        while (msg := step_bus(self.bus)) is not None:
            if msg.kind == "ANNOUNCE":
                self.backplane.mark_announced(msg)
            else:
                self.backplane.log(msg)
            if msg.kind == "ORDER_DIRECTIVE":
                for m in msg.payload["swaps"]:
                    self.post_own(self.backplane.swap(m))
        self.refresh_holdings()


def spawn(config: ProtocolConfig, receiver_directives: Sequence[int] = ()) -> Network:
    """Create Alice, the members and the bus; nothing is measured yet.

    ``receiver_directives`` lets Alice name the receiver after setup; at most
    one receiver may be named in total.
    """
    directives = list(receiver_directives)
    if len(directives) > 1 or (directives and config.receiver is not None):
        raise ConfigurationError("duplicate receiver directive")
    if directives:
        config = replace(config, receiver=directives[0])
    session = pe.start_session(config, apply_receiver_directive=False, auto_announce=False)
    receiver = config.receiver_id
    actors = {ALICE: PartyActor(ALICE, "sender")}
    for m in session.topology.members:
        actors[m] = PartyActor(m, "receiver" if m == receiver else "controller")
    bus = Bus()
    bus.subscribers = list(actors.values())
    net = Network(config, actors, bus, Backplane(session),
                  tuple(receiver_swap_schedule(session.topology, receiver)))
    net.refresh_holdings()
    return net


def deliver(net: Network) -> None:
    """Order directive, receiver swaps, feeding and every pass, up to delivery."""
    net.bus.post("ORDER_DIRECTIVE", ALICE, {"swaps": list(net.swap_schedule)})
    net.drain()
    for record in net.backplane.feed(ALICE):
        net.post_own(record)
    net.refresh_holdings()
    while net.backplane.phase != "delivered":
        actor = net.backplane.next_passer()
        net.post_own(net.backplane.pass_share(actor))
        net.refresh_holdings()


def announce_batch(net: Network) -> None:
    """Deferred policy: Alice announces first, then the members in sequence order."""
    session = net.backplane._session
    for seq in session.announce_order():
        record = session.transcript[seq]
        if not record.announced:
            net.announce(record)


def retrieve(net: Network):
    receiver = net.receiver
    return net.backplane.retrieve(receiver.id, receiver.knowledge.values())


def test_exchange(net: Network, fidelity: float, rng: np.random.Generator) -> bool:
    """Alice asks the receiver to check a test state; the answer is one bit."""
    net.bus.post("TEST_REQUEST", ALICE, {"bits": []})
    net.drain()
    passed = bool(rng.random() < fidelity)
    net.bus.post("TEST_RESPONSE", net.receiver.id, {"bits": [int(passed)]})
    net.drain()
    return passed


def run_distributed(config: ProtocolConfig) -> RunReport:
    """Same run as :func:`protocol_engine.run_full`, driven by messages."""
    net = spawn(config)
    deliver(net)
    if config.disclosure_policy == "deferred":
        announce_batch(net)
    _, fidelity = retrieve(net)
    return net.backplane.report(fidelity)
