"""Full sharing sessions on the dense engine.

A session feeds the payload into the chain, passes it hop by hop to the
receiver, and lets the receiver undo the accumulated Pauli word computed
from the public announcements.  Resource pairs are materialised in the
dense register only when first touched and measured qubits are retired
right away, so the live register never exceeds a handful of qubits.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from . import pauli_frame as pf
from . import quantum_core as qc
from .errors import (
    ConfigurationError,
    IncompleteTranscriptError,
    PreconditionError,
    ProtocolOrderError,
    ZeroBranchError,
)
from .pauli_frame import ALICE, PauliWord2
from .quantum_core import BellLabel, QubitRef, StateVector
from .topology import (
    Topology,
    build_topology,
    initial_word,
    member,
    receiver_swap_schedule,
    route_for,
    swap_topology,
)

POLICIES = ("deferred", "immediate")
EXACT_TOL = 1e-10


@dataclass(frozen=True)
class TwoQubitState:
    """``sum K_ij |ij>`` with ``i`` the first payload qubit."""

    coefficients: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.coefficients, dtype=complex)
        if k.shape != (2, 2):
            raise ConfigurationError("payload needs a 2x2 coefficient array")
        object.__setattr__(self, "coefficients", k)
        norm = float(np.sum(np.abs(k) ** 2))
        if norm < qc.ZERO_BRANCH_TOL:
            raise ConfigurationError("payload has zero norm")
        if abs(norm - 1) > qc.NORM_TOL:
            raise ConfigurationError(f"payload is not normalized (sum |K|^2 = {norm!r}); pass normalize=True")

    @classmethod
    def from_flat(cls, values: Sequence[complex], normalize: bool = False) -> "TwoQubitState":
        k = np.asarray(values, dtype=complex).reshape(2, 2)
        if normalize:
            norm = np.sqrt(np.sum(np.abs(k) ** 2))
            if norm < qc.ZERO_BRANCH_TOL:
                raise ConfigurationError("payload has zero norm")
            k = k / norm
        return cls(k)

    @classmethod
    def random(cls, rng: np.random.Generator) -> "TwoQubitState":
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        return cls.from_flat(v, normalize=True)

    def vector(self) -> np.ndarray:
        """Amplitudes in register order ``[qubit1, qubit2]``."""
        return self.coefficients.T.reshape(-1).copy()

    def flat(self) -> list[complex]:
        return [complex(c) for c in self.coefficients.reshape(-1)]

    def __eq__(self, other):
        return isinstance(other, TwoQubitState) and np.array_equal(self.coefficients, other.coefficients)

    __hash__ = None  # type: ignore[assignment]


PHI00_PAYLOAD = TwoQubitState.from_flat([1, 0, 0, 1], normalize=True)


@dataclass(frozen=True)
class MeasurementRecord:
    sequence_number: int
    actor: str
    kind: str  # "feed" | "pass" | "swap"
    qubits: tuple[QubitRef, QubitRef]
    outcome: BellLabel
    announced: bool = False
    slot: int | None = None
    directive: str | None = None

    @property
    def bits(self) -> tuple[int, int]:
        return (self.outcome.mu, self.outcome.nu)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.sequence_number,
            "actor": self.actor,
            "kind": self.kind,
            "qubits": [[q.owner, q.slot] for q in self.qubits],
            "outcome": list(self.bits),
            "announced": self.announced,
            "slot": self.slot,
            "directive": self.directive,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MeasurementRecord":
        q1, q2 = (QubitRef(str(o), int(s)) for o, s in d["qubits"])
        return cls(int(d["seq"]), d["actor"], d["kind"], (q1, q2), BellLabel.of(d["outcome"]),
                   bool(d["announced"]), d.get("slot"), d.get("directive"))


@dataclass(frozen=True)
class ProtocolConfig:
    n_parties: int
    seed: int = 0
    receiver: int | None = None
    payload: TwoQubitState = PHI00_PAYLOAD
    disclosure_policy: str = "deferred"
    forced_outcomes: tuple[BellLabel, ...] | None = None
    lazy_pairs: bool = True
    pair_labels: tuple[tuple[tuple[str, str], BellLabel], ...] = ()
    excluded: tuple[int, ...] = ()  # members swapped out of the chain before feeding

    def __post_init__(self):
        if self.n_parties < 2:
            raise ConfigurationError("parties must be ≥ 2")
        r = self.receiver_index
        if not 1 <= r <= self.n_parties:
            raise ConfigurationError(f"receiver must be in [1, {self.n_parties}], got {r}")
        ex = tuple(int(k) for k in self.excluded)
        object.__setattr__(self, "excluded", ex)
        if len(set(ex)) != len(ex) or any(not 1 <= k <= self.n_parties for k in ex):
            raise ConfigurationError(f"excluded members must be distinct indices in [1, {self.n_parties}]")
        if r in ex:
            raise ConfigurationError("the receiver cannot be excluded")
        if self.n_parties - len(ex) < 2:
            raise ConfigurationError("at least two members must stay in the chain")
        if self.disclosure_policy not in POLICIES:
            raise ConfigurationError(f"policy must be one of {POLICIES}")
        if self.forced_outcomes is not None:
            object.__setattr__(self, "forced_outcomes",
                               tuple(BellLabel.of(o) for o in self.forced_outcomes))

    @property
    def receiver_index(self) -> int:
        return self.n_parties if self.receiver is None else int(self.receiver)

    @property
    def receiver_id(self) -> str:
        return member(self.receiver_index)

    @property
    def n_measurements(self) -> int:
        return self.n_parties + 1


@dataclass
class Session:
    config: ProtocolConfig
    topology: Topology
    route: pf.Route
    state: StateVector | None
    rng: np.random.Generator
    frame_oracle: pf.FrameState
    base_word: PauliWord2
    transcript: list[MeasurementRecord] = field(default_factory=list)
    events: list[dict[str, Any]] = field(default_factory=list)
    phase: str = "setup"
    passes_done: int = 0
    carriers: dict[int, QubitRef] = field(default_factory=dict)
    carrier_arrival: dict[int, int] = field(default_factory=dict)
    live_pairs: dict[int, dict[str, QubitRef]] = field(default_factory=dict)
    consumed: set[int] = field(default_factory=set)
    pairs_prepared: int = 0
    branch_probability: float = 1.0
    max_live_qubits: int = 0
    swap_directives: dict[int, tuple[str | None, BellLabel]] = field(default_factory=dict)
    initial_route: pf.Route | None = None
    payload_qubits: tuple[QubitRef, QubitRef] | None = None
    correction: PauliWord2 | None = None
    auto_announce: bool = True
    _slots: dict[str, itertools.count] = field(default_factory=dict)
    _clock: itertools.count = field(default_factory=itertools.count)
    _forced: list[BellLabel] | None = None

    # ---- qubit and register bookkeeping -------------------------------------------------

    def new_qubit(self, owner: str) -> QubitRef:
        counter = self._slots.setdefault(owner, itertools.count())
        return QubitRef(owner, next(counter))

    def add_qubits(self, qubits: Sequence[QubitRef]) -> None:
        self.state = qc.make_register(qubits) if self.state is None else qc.extend(self.state, qubits)
        self.max_live_qubits = max(self.max_live_qubits, self.state.n_qubits)

    def retire(self, qubits: Sequence[QubitRef]) -> None:
        self.state = qc.retire_qubits(self.state, qubits)

    def ensure_live(self, pair_id: int) -> dict[str, QubitRef]:
        if pair_id in self.consumed:
            raise ProtocolOrderError(f"pair {pair_id} was already consumed")
        if pair_id not in self.live_pairs:
            pair = self.topology.pair(pair_id)
            a, b = pair.ends
            qa, qb = self.new_qubit(a), self.new_qubit(b)
            self.add_qubits([qa, qb])
            self.state = qc.prepare_bell(self.state, qa, qb, pair.label)
            self.live_pairs[pair_id] = {a: qa, b: qb}
            self.pairs_prepared += 1
        return self.live_pairs[pair_id]

    def unused_pairs(self, party: str):
        return [p for p in self.topology.pairs_of(party) if p.pair_id not in self.consumed]

    # ---- measurement ----------------------------------------------------------------------

    def measure(self, actor: str, kind: str, q1: QubitRef, q2: QubitRef,
                slot: int | None = None, directive: str | None = None) -> MeasurementRecord:
        if self._forced is not None:
            if not self._forced:
                raise ConfigurationError("forced outcome list is shorter than the run")
            outcome = self._forced.pop(0)
            prob, self.state = qc.bell_measure_forced(self.state, q1, q2, outcome)
        else:
            probs = qc.bell_probabilities(self.state, q1, q2)
            outcome, self.state = qc.bell_measure(self.state, q1, q2, self.rng)
            prob = probs[outcome]
        self.branch_probability *= prob
        self.retire([q1, q2])
        record = MeasurementRecord(len(self.transcript), actor, kind, (q1, q2), outcome,
                                   announced=False, slot=slot, directive=directive)
        self.transcript.append(record)
        if self.auto_announce and self.config.disclosure_policy == "immediate":
            self.announce(record.sequence_number)
        return self.transcript[-1]

    def announce(self, seq: int, time: int | None = None) -> None:
        record = self.transcript[seq]
        if record.announced:
            return
        self.transcript[seq] = replace(record, announced=True)
        self.log("ANNOUNCE", record.actor, list(record.bits), time)

    def announce_order(self) -> list[int]:
        """Deferred batch order: Alice's records first, then the rest by sequence number."""
        alice = [r.sequence_number for r in self.transcript if r.actor == ALICE]
        others = [r.sequence_number for r in self.transcript if r.actor != ALICE]
        return alice + others

    def announce_all(self) -> None:
        for seq in self.announce_order():
            self.announce(seq)

    def log(self, kind: str, sender: str, bits: list[int], time: int | None = None) -> None:
        t = next(self._clock) if time is None else time
        self.events.append({"time": t, "kind": kind, "sender": sender, "bits": bits})

    def announced(self) -> list[MeasurementRecord]:
        return [r for r in self.transcript if r.announced]

    # ---- public views -----------------------------------------------------------------------

    @property
    def holders(self) -> tuple[str, str]:
        if not self.carriers:
            return (ALICE, ALICE)
        return (self.carriers[1].owner, self.carriers[2].owner)

    def receiver_state(self) -> StateVector:
        """Uncorrected payload carriers, ordered ``[slot 1, slot 2]``."""
        if self.phase not in ("delivered", "retrieved"):
            raise ProtocolOrderError("payload not delivered yet")
        c = [self.carriers[1], self.carriers[2]]
        if self.state.n_qubits == 2:
            return qc.reorder(self.state, c)
        raise PreconditionError("carrier pair is not alone in the register")

    def carrier_density(self) -> qc.DensityMatrix:
        return qc.reduced_density(self.state, [self.carriers[1], self.carriers[2]])

    def party_density(self, party: str) -> qc.DensityMatrix:
        """Reduced state of everything ``party`` currently holds."""
        for p in self.unused_pairs(party):
            self.ensure_live(p.pair_id)
        held = [q for q in self.state.qubits if q.owner == party]
        if not held:
            raise PreconditionError(f"{party} holds no qubit")
        return qc.reduced_density(self.state, held)

    def frame_events(self, records: Iterable[MeasurementRecord]) -> list[tuple]:
        out = []
        for r in sorted(records, key=lambda r: r.sequence_number):
            if r.kind == "feed":
                out.append(("feed", r.actor, r.outcome, r.slot))
            elif r.kind == "pass":
                out.append(("pass", r.actor, r.outcome, None))
            else:
                directive, moved = self.swap_directives[r.sequence_number]
                out.append(("swap", r.actor, r.outcome, (directive, moved)))
        return out


@dataclass(frozen=True)
class RunReport:
    n_parties: int
    receiver: str
    seed: int
    policy: str
    fidelity: float
    transcript: tuple[MeasurementRecord, ...]
    events: tuple[dict[str, Any], ...]
    bell_pairs_prepared: int
    ghz_measurements: int = 0
    extra_swaps: int = 0
    branch_probability: float = 1.0
    correction: tuple[int, int, int, int] = (0, 0, 0, 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_parties": self.n_parties,
            "receiver": self.receiver,
            "seed": self.seed,
            "policy": self.policy,
            "fidelity": self.fidelity,
            "transcript": [r.to_dict() for r in self.transcript],
            "events": [dict(e) for e in self.events],
            "bell_pairs_prepared": self.bell_pairs_prepared,
            "ghz_measurements": self.ghz_measurements,
            "extra_swaps": self.extra_swaps,
            "branch_probability": self.branch_probability,
            "correction": list(self.correction),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunReport":
        return cls(
            n_parties=int(d["n_parties"]),
            receiver=d["receiver"],
            seed=int(d["seed"]),
            policy=d["policy"],
            fidelity=float(d["fidelity"]),
            transcript=tuple(MeasurementRecord.from_dict(r) for r in d["transcript"]),
            events=tuple(dict(e) for e in d["events"]),
            bell_pairs_prepared=int(d["bell_pairs_prepared"]),
            ghz_measurements=int(d.get("ghz_measurements", 0)),
            extra_swaps=int(d.get("extra_swaps", 0)),
            branch_probability=float(d.get("branch_probability", 1.0)),
            correction=tuple(int(b) for b in d.get("correction", (0, 0, 0, 0))),
        )


# ---- protocol steps ---------------------------------------------------------------------------


def start_session(config: ProtocolConfig, topology: Topology | None = None,
                  apply_receiver_directive: bool = True, auto_announce: bool = True) -> Session:
    """Register the payload and the pair pattern; phase ``setup``.

    When the configured receiver is not the last member, the swaps that
    restore the chain pattern around it are performed here.  With
    ``auto_announce`` off the session neither logs the order directive nor
    announces anything; a caller such as the message bus does that.
    """
    if topology is None:
        labels = {ends: label for ends, label in config.pair_labels}
        topology = build_topology(config.n_parties, labels)
    receiver = config.receiver_id
    route = route_for(topology, receiver)
    base = initial_word(topology, route)
    session = Session(
        config=config,
        topology=topology,
        route=route,
        state=None,
        rng=qc.make_rng(config.seed),
        frame_oracle=pf.frame_start(route, base),
        base_word=base,
        initial_route=route,
        auto_announce=auto_announce,
        _forced=list(config.forced_outcomes) if config.forced_outcomes is not None else None,
    )
    p1, p2 = session.new_qubit(ALICE), session.new_qubit(ALICE)
    session.state = qc.from_amplitudes([p1, p2], config.payload.vector())
    session.max_live_qubits = 2
    session.payload_qubits = (p1, p2)
    if not config.lazy_pairs:
        for pair in topology.pairs:
            session.ensure_live(pair.pair_id)
    if auto_announce:
        session.log("ORDER_DIRECTIVE", ALICE, [])
    if apply_receiver_directive:
        for m in receiver_swap_schedule(topology, receiver):
            entanglement_swap(session, m)
        for k in config.excluded:
            if len(session.unused_pairs(member(k))) == 2:
                entanglement_swap(session, member(k))
    return session


def feed(session: Session) -> tuple[MeasurementRecord, MeasurementRecord]:
    """Alice teleports payload qubit s to the first member on path s."""
    if session.phase != "setup":
        raise ProtocolOrderError(f"feed requires phase setup, session is {session.phase}")
    records = []
    outcomes = []
    for s in (1, 2):
        first = session.route.arcs[s - 1][0]
        pair = session.topology.pair_between(ALICE, first)
        halves = session.ensure_live(pair.pair_id)
        payload = session.payload_qubits[s - 1]
        rec = session.measure(ALICE, "feed", payload, halves[ALICE], slot=s)
        session.consumed.add(pair.pair_id)
        session.carriers[s] = halves[first]
        session.carrier_arrival[s] = s
        records.append(rec)
        outcomes.append(rec.outcome)
    session.frame_oracle = pf.frame_feed(outcomes, session.route, channel_labels=((0, 0), (0, 0)),
                                         start=session.frame_oracle)
    session.phase = "fed"
    return records[0], records[1]


def _elder_slot(session: Session) -> int:
    receiver = session.route.receiver
    movable = [s for s in (1, 2) if session.carriers[s].owner != receiver]
    return min(movable, key=lambda s: (session.carrier_arrival[s], s))


def pass_step(session: Session, actor: str | None = None) -> MeasurementRecord:
    """Elder holder Bell-measures its payload share with its outgoing pair half."""
    if session.phase not in ("fed", "passing"):
        raise ProtocolOrderError(f"pass requires phase fed/passing, session is {session.phase}")
    s = _elder_slot(session)
    carrier = session.carriers[s]
    holder = carrier.owner
    if actor is not None and actor != holder:
        raise ProtocolOrderError(f"{actor} is not the elder holder; {holder} passes next")
    outgoing = session.unused_pairs(holder)
    if len(outgoing) != 1:
        raise ProtocolOrderError(f"{holder} has {len(outgoing)} unused pairs, expected 1")
    pair = outgoing[0]
    halves = session.ensure_live(pair.pair_id)
    target = pair.other(holder)
    rec = session.measure(holder, "pass", carrier, halves[holder])
    session.consumed.add(pair.pair_id)
    session.carriers[s] = halves[target]
    session.carrier_arrival[s] = 2 + session.passes_done + 1
    session.passes_done += 1
    session.frame_oracle = pf.frame_pass(session.frame_oracle, rec.outcome)
    if all(c.owner == session.route.receiver for c in session.carriers.values()):
        session.phase = "delivered"
        if session.auto_announce and session.config.disclosure_policy == "deferred":
            session.announce_all()
    else:
        session.phase = "passing"
    return rec


def entanglement_swap(session: Session, party: str, new_receiver: str | None = None):
    """``party`` Bell-measures its halves of two unused pairs, joining the far ends.

    Returns the outcome and the rewritten topology.  Swapping at the
    receiver hands the receiver role to ``new_receiver``, one of its two
    neighbours on the cycle.
    """
    if session.phase not in ("setup", "fed", "passing"):
        raise ProtocolOrderError(f"swap not allowed in phase {session.phase}")
    if party in session.holders:
        raise ProtocolOrderError(f"{party} holds a payload qubit")
    held = session.unused_pairs(party)
    if len(held) != 2:
        raise ConfigurationError(f"{party} must hold halves of two distinct pairs, holds {len(held)}")
    route = session.route
    if party == route.receiver and new_receiver is None:
        raise ConfigurationError("swapping at the receiver needs a new receiver")
    moved = BellLabel(0, 0)
    if party == route.receiver:
        # the pair between the new receiver and the old one switches paths
        moved = session.topology.pair_between(new_receiver, party).label
    h1, h2 = (session.ensure_live(p.pair_id) for p in held)
    rec = session.measure(party, "swap", h1[party], h2[party], directive=new_receiver)
    session.swap_directives[rec.sequence_number] = (new_receiver, moved)
    x, y = held[0].other(party), held[1].other(party)
    new_topology = swap_topology(session.topology, party, rec.outcome)
    merged = new_topology.pairs[-1]
    for p in held:
        del session.live_pairs[p.pair_id]
        session.consumed.add(p.pair_id)
    session.live_pairs[merged.pair_id] = {x: h1[x], y: h2[y]}
    session.topology = new_topology
    session.frame_oracle = pf.frame_swap(session.frame_oracle, party, rec.outcome, new_receiver, moved)
    session.route = session.frame_oracle.route
    return rec.outcome, new_topology


def correction_word(session: Session, announcements: Iterable[MeasurementRecord]) -> PauliWord2:
    """Retrieval word from announcements alone."""
    announcements = list(announcements)
    have = {r.sequence_number for r in announcements}
    missing = [r.sequence_number for r in session.transcript if r.sequence_number not in have]
    if missing:
        raise IncompleteTranscriptError(f"missing announcements for records {missing}")
    frame = pf.replay(session.initial_route, session.frame_events(announcements), session.base_word)
    return pf.frame_retrieval(frame)


def apply_word(state: StateVector, carriers: Sequence[QubitRef], word: PauliWord2) -> StateVector:
    for s, q in enumerate(carriers, start=1):
        z, x = word.slot(s)
        state = qc.apply_pauli(state, q, z, x)
    return state


def retrieve(session: Session, announcements: Iterable[MeasurementRecord]):
    """Receiver applies the announced correction; returns (state, fidelity)."""
    if session.phase != "delivered":
        raise ProtocolOrderError(f"retrieve requires phase delivered, session is {session.phase}")
    word = correction_word(session, announcements)
    carriers = [session.carriers[1], session.carriers[2]]
    session.state = apply_word(session.state, carriers, word)
    session.correction = word
    session.phase = "retrieved"
    target = session.config.payload.vector()
    if session.state.n_qubits == 2:
        recovered = qc.reorder(session.state, carriers)
    else:
        recovered = session.carrier_density()
    return recovered, qc.fidelity(recovered, target)


def word_fidelities(session: Session) -> dict[PauliWord2, float]:
    """Fidelity with the payload after each of the 16 candidate corrections."""
    carriers = [session.carriers[1], session.carriers[2]]
    target = session.config.payload.vector()
    out = {}
    for w in pf.ALL_WORDS:
        st = apply_word(session.state, carriers, w)
        out[w] = qc.fidelity(qc.reduced_density(st, carriers), target)
    return out


def run_session(config: ProtocolConfig) -> Session:
    """Feed and pass until delivery, without retrieving."""
    session = start_session(config)
    feed(session)
    while session.phase != "delivered":
        pass_step(session)
    return session


def finish(session: Session) -> RunReport:
    if session.config.disclosure_policy == "deferred":
        session.announce_all()
    _, fid = retrieve(session, session.announced())
    return make_report(session, fid)


def make_report(session: Session, fidelity: float) -> RunReport:
    cfg = session.config
    return RunReport(
        n_parties=cfg.n_parties,
        receiver=cfg.receiver_id,
        seed=cfg.seed,
        policy=cfg.disclosure_policy,
        fidelity=fidelity,
        transcript=tuple(session.transcript),
        events=tuple(dict(e) for e in session.events),
        bell_pairs_prepared=session.pairs_prepared,
        extra_swaps=sum(1 for r in session.transcript if r.kind == "swap"),
        branch_probability=session.branch_probability,
        correction=(session.correction or PauliWord2()).as_tuple(),
    )


def run_full(config: ProtocolConfig) -> RunReport:
    """Feed, all passes, retrieval.  Deterministic in ``config.seed``."""
    return finish(run_session(config))


@dataclass(frozen=True)
class Branch:
    outcomes: tuple[BellLabel, ...]
    probability: float
    fidelity: float
    correction: PauliWord2
    optimal: tuple[PauliWord2, ...]


def enumerate_branches(config: ProtocolConfig) -> Iterator[Branch]:
    """Every forced outcome assignment of a run, with the dense-optimal corrections.

    Branches of probability zero are skipped.
    """
    length = len(run_session(replace(config, forced_outcomes=None)).transcript)
    for outcomes in itertools.product(qc.BELL_LABELS, repeat=length):
        try:
            session = run_session(replace(config, forced_outcomes=outcomes))
        except ZeroBranchError:
            continue
        scores = word_fidelities(session)
        optimal = tuple(w for w, f in scores.items() if f >= 1 - EXACT_TOL)
        report = finish(session)
        yield Branch(outcomes, session.branch_probability, report.fidelity,
                     session.correction, optimal)
