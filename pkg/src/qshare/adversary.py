"""Collusion by adjacent controllers, fake-state injection and its detection.

Two controllers who hold both payload shares at the same moment can move
one share onto the other over a private Bell pair and keep the carried
state.  Without the other parties' bits they hold a Pauli-twirled state;
once every announcement is public they recover the payload exactly.  To
stay hidden they push a fake pair down the chain, which Alice and the
receiver catch by comparing test payloads.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import pauli_frame as pf
from . import protocol_engine as pe
from . import quantum_core as qc
from .errors import ConfigurationError
from .pauli_frame import ALICE, PauliWord2
from .quantum_core import BellLabel, QubitRef
from .topology import member, member_index

KINDS = ("collusion", "collusion_with_fake")


@dataclass(frozen=True)
class AttackSpec:
    positions: tuple[int, int]
    kind: str = "collusion_with_fake"
    fake_state: pe.TwoQubitState | None = None  # None means |00>
    fake_mixed: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"attack kind must be one of {KINDS}")
        a, b = self.positions
        if b != a + 1:
            raise ConfigurationError(f"colluders must sit at adjacent positions, got {self.positions}")

    @property
    def members(self) -> frozenset[str]:
        return frozenset(member(k) for k in self.positions)

    def check(self, n_parties: int) -> None:
        a, b = self.positions
        if a < 1 or b > n_parties - 1:
            raise ConfigurationError(f"colluders must be controllers in [1, {n_parties - 1}], got {self.positions}")

    def fake_vector(self) -> np.ndarray:
        if self.fake_state is None:
            return np.array([1, 0, 0, 0], dtype=complex)
        return self.fake_state.vector()


@dataclass
class Capture:
    spec: AttackSpec
    capture_seq: int
    elder_slot: int
    private_outcome: BellLabel
    captured: dict[int, QubitRef]
    frame_at_capture: pf.FrameState


@dataclass(frozen=True)
class AttackReport:
    captured_fidelity_before: float
    captured_fidelity_after: float
    receiver_fidelity: float
    detected: bool
    detection_stats: dict[str, Any] = field(default_factory=dict)
    captured_mixedness: float = 0.0
    averaged_state: np.ndarray | None = field(default=None, compare=False, repr=False)
    chain_cut: bool = False
    run: pe.RunReport | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "captured_fidelity_before": self.captured_fidelity_before,
            "captured_fidelity_after": self.captured_fidelity_after,
            "receiver_fidelity": self.receiver_fidelity,
            "detected": self.detected,
            "detection_stats": self.detection_stats,
            "captured_mixedness": self.captured_mixedness,
            "chain_cut": self.chain_cut,
        }


def _private_measure(session: pe.Session, q1: QubitRef, q2: QubitRef) -> BellLabel:
    """Bell measurement whose outcome never enters the public transcript."""
    if session._forced is not None:
        outcome = session._forced.pop(0)
        prob, session.state = qc.bell_measure_forced(session.state, q1, q2, outcome)
    else:
        probs = qc.bell_probabilities(session.state, q1, q2)
        outcome, session.state = qc.bell_measure(session.state, q1, q2, session.rng)
        prob = probs[outcome]
    session.branch_probability *= prob
    session.retire([q1, q2])
    return outcome


def _capture(session: pe.Session, spec: AttackSpec) -> Capture:
    elder = pe._elder_slot(session)
    other = 3 - elder
    e_carrier, f_carrier = session.carriers[elder], session.carriers[other]
    e, f = e_carrier.owner, f_carrier.owner
    # private pair between the colluders, counted as a shared Bell pair
    qe, qf = session.new_qubit(e), session.new_qubit(f)
    session.add_qubits([qe, qf])
    session.state = qc.prepare_bell(session.state, qe, qf, BellLabel(0, 0))
    session.pairs_prepared += 1
    outcome = _private_measure(session, e_carrier, qe)
    captured = {elder: qf, other: f_carrier}
    fakes = {elder: session.new_qubit(e), other: session.new_qubit(f)}
    if spec.fake_mixed:
        # each fake share is half of a pair whose other half the colluders discard
        for s in (1, 2):
            anc = session.new_qubit(fakes[s].owner)
            session.add_qubits([fakes[s], anc])
            session.state = qc.prepare_bell(session.state, fakes[s], anc, BellLabel(0, 0))
    else:
        session.state = qc.append_state(session.state, [fakes[1], fakes[2]], spec.fake_vector())
    session.max_live_qubits = max(session.max_live_qubits, session.state.n_qubits)
    for s in (1, 2):
        session.carriers[s] = fakes[s]
    return Capture(spec, len(session.transcript), elder, outcome, captured,
                   session.frame_oracle)


def _colluders_hold(session: pe.Session, spec: AttackSpec) -> bool:
    holders = set(session.holders)
    return holders == set(spec.members) and session.route.receiver not in holders


def attacked_session(config: pe.ProtocolConfig, attacks: Sequence[AttackSpec]):
    """Run feed and passes with colluders striking whenever they co-hold the payload.

    Returns the delivered session and the captures that happened.
    """
    session = pe.start_session(config)
    pe.feed(session)
    captures: list[Capture] = []
    pending = list(attacks)
    cut = False
    while session.phase != "delivered":
        for spec in list(pending):
            if _colluders_hold(session, spec):
                captures.append(_capture(session, spec))
                pending.remove(spec)
                if spec.kind == "collusion":
                    cut = True
        if cut:
            break
        pe.pass_step(session)
    return session, captures, cut


def _candidate_words(session: pe.Session, capture: Capture,
                     known: set[int]) -> Counter:
    """Correction words the colluders consider possible, with multiplicities."""
    records = [r for r in session.transcript if r.sequence_number < capture.capture_seq]
    unknown = [r for r in records if r.sequence_number not in known]
    words: Counter = Counter()
    for guess in itertools.product(qc.BELL_LABELS, repeat=len(unknown)):
        guessed = {r.sequence_number: o for r, o in zip(unknown, guess)}
        assumed = [replace(r, outcome=guessed.get(r.sequence_number, r.outcome)) for r in records]
        frame = pf.replay(session.initial_route, session.frame_events(assumed), session.base_word)
        words[frame.frame.add(capture.elder_slot, *capture.private_outcome)] += 1
    return words


def _corrected_density(session: pe.Session, capture: Capture, word: PauliWord2) -> np.ndarray:
    qubits = [capture.captured[1], capture.captured[2]]
    state = pe.apply_word(session.state, qubits, word)
    return qc.reduced_density(state, qubits).matrix


def captured_state(session: pe.Session, capture: Capture, known: set[int]) -> np.ndarray:
    """Colluders' best state: their correction averaged over every unknown bit."""
    words = _candidate_words(session, capture, known)
    total = sum(words.values())
    return sum(n * _corrected_density(session, capture, w) for w, n in words.items()) / total


def _known_at_capture(session: pe.Session, capture: Capture) -> set[int]:
    colluders = capture.spec.members
    known = set()
    for r in session.transcript[: capture.capture_seq]:
        if r.actor in colluders:
            known.add(r.sequence_number)
        elif session.config.disclosure_policy == "immediate":
            known.add(r.sequence_number)
    return known


def run_collusion(config: pe.ProtocolConfig, spec: AttackSpec, test_rounds: int = 0,
                  rng: np.random.Generator | None = None) -> AttackReport:
    spec.check(config.n_parties)
    session, captures, cut = attacked_session(config, [spec])
    if not captures:
        raise ConfigurationError(f"colluders {sorted(spec.members)} never hold both payload shares")
    cap = captures[0]
    target = config.payload.vector()
    before = captured_state(session, cap, _known_at_capture(session, cap))
    everything = {r.sequence_number for r in session.transcript}
    after = captured_state(session, cap, everything)
    run = None
    if cut:
        receiver_fid = 0.0
    else:
        session.announce_all()
        _, receiver_fid = pe.retrieve(session, session.announced())
        run = pe.make_report(session, receiver_fid)
    stats: dict[str, Any] = {}
    detected = cut
    if test_rounds > 0:
        rng = rng if rng is not None else qc.make_rng(config.seed ^ 0x5EED)
        det = detect(config, test_rounds, rng, attacks=[spec])
        stats = det.to_dict()
        detected = detected or det.verdict == CHEATING
    return AttackReport(
        captured_fidelity_before=qc.fidelity(before, target),
        captured_fidelity_after=qc.fidelity(after, target),
        receiver_fidelity=receiver_fid,
        detected=detected,
        detection_stats=stats,
        captured_mixedness=qc.trace_distance(before, np.eye(4) / 4),
        averaged_state=before,
        chain_cut=cut,
        run=run,
    )


# ---- confidentiality of a single controller ---------------------------------------------


def withheld_average(config: pe.ProtocolConfig, party: str, passes: int,
                     controller_outcomes: Sequence[Sequence[int]] | None = None) -> np.ndarray:
    """``party``'s reduced state after ``passes`` passes, averaged over Alice's withheld bits.

    The controllers' outcomes are held fixed (default all ``(0, 0)``); each of
    Alice's 16 feed outcome pairs is weighted by its Born probability.
    """
    outcomes = [BellLabel.of(o) for o in (controller_outcomes or [(0, 0)] * passes)][:passes]
    if len(outcomes) != passes:
        raise ConfigurationError(f"need {passes} controller outcomes, got {len(outcomes)}")
    acc, weight = None, 0.0
    for a1, a2 in itertools.product(qc.BELL_LABELS, repeat=2):
        cfg = replace(config, forced_outcomes=(a1, a2, *outcomes))
        session = pe.start_session(cfg)
        pe.feed(session)
        for _ in range(passes):
            pe.pass_step(session)
        rho = session.party_density(party).matrix * session.branch_probability
        acc = rho if acc is None else acc + rho
        weight += session.branch_probability
    return acc / weight


# ---- detection ----------------------------------------------------------------------------

UNDETERMINED = "undetermined"
CHEATING = "cheating detected"
CLEAN = "no cheating detected"


@dataclass(frozen=True)
class DetectionReport:
    rounds: tuple[dict[str, Any], ...]
    schedule: tuple[str, ...]
    verdict: str

    @property
    def mismatches(self) -> int:
        return sum(1 for r in self.rounds if not r["passed"])

    def to_dict(self) -> dict[str, Any]:
        return {"rounds": [dict(r) for r in self.rounds], "schedule": list(self.schedule),
                "mismatches": self.mismatches, "verdict": self.verdict}


def received_density(config: pe.ProtocolConfig, attacks: Sequence[AttackSpec] = ()) -> np.ndarray:
    """Receiver's corrected pair after one run, honest or attacked."""
    session, captures, cut = attacked_session(config, attacks)
    if cut:
        return np.eye(4, dtype=complex) / 4
    session.announce_all()
    pe.retrieve(session, session.announced())
    return session.carrier_density().matrix


def detect(config: pe.ProtocolConfig, n_test_rounds: int, rng: np.random.Generator,
           attacks: Sequence[AttackSpec] = (), interleave_p: float = 0.5,
           stop_on_mismatch: bool = False) -> DetectionReport:
    """Alice hides known test payloads among real runs and checks each one.

    For every test round the receiver measures the projector onto the test
    state Alice announces after delivery; failing that projector is a
    mismatch.  Only test rounds are simulated; real rounds appear in the
    schedule as placeholders.  With ``stop_on_mismatch`` Alice aborts at the
    first failed test, since the verdict can no longer change.
    """
    if n_test_rounds < 1:
        return DetectionReport((), (), UNDETERMINED)
    schedule = []
    rounds = []
    while len(rounds) < n_test_rounds:
        if rng.random() >= interleave_p:
            schedule.append("real")
            continue
        schedule.append("test")
        payload = pe.TwoQubitState.random(rng)
        cfg = replace(config, payload=payload, seed=int(rng.integers(2**63)), forced_outcomes=None)
        rho = received_density(cfg, attacks)
        f = qc.fidelity(rho, payload.vector())
        rounds.append({"round": len(schedule) - 1, "fidelity": f, "passed": bool(rng.random() < f)})
        if stop_on_mismatch and not rounds[-1]["passed"]:
            break
    verdict = CHEATING if any(not r["passed"] for r in rounds) else CLEAN
    return DetectionReport(tuple(rounds), tuple(schedule), verdict)


def analytic_detection_probability(pass_probability: float, t: int) -> float:
    return 1.0 - pass_probability**t


# ---- localization -------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationReport:
    suspected: frozenset[str]
    status: str  # clean | localized | superset | inconclusive
    per_receiver: tuple[dict[str, Any], ...]


def exposure_pairs(config: pe.ProtocolConfig) -> set[frozenset[str]]:
    """Pairs of controllers that co-hold the payload at some point of a run."""
    session = pe.start_session(replace(config, forced_outcomes=None))
    frame = pf.frame_feed(((0, 0), (0, 0)), session.route, start=pf.frame_start(session.route))
    receiver = session.route.receiver
    out = set()
    while not frame.delivered:
        holders = frozenset(frame.holder_pair)
        if receiver not in holders and len(holders) == 2:
            out.add(holders)
        frame = pf.frame_pass(frame, (0, 0))
    return out


def localize(config: pe.ProtocolConfig, attacks: Sequence[AttackSpec],
             receivers: Sequence[int] | None = None, rounds: int = 20,
             rng: np.random.Generator | None = None) -> LocalizationReport:
    """Sweep the receiver role by swapping and intersect the failing configurations.

    A pair exposed in every failing configuration and in no passing one is
    only reported as localized after a confirmation pass: the failing
    configurations are rerun with that pair swapped out of the chain, and
    any remaining failure widens the report to every uncleared pair.
    """
    rng = rng if rng is not None else qc.make_rng(config.seed)
    receivers = list(receivers) if receivers is not None else list(range(1, config.n_parties + 1))
    failing, passing, per = [], [], []
    for r in receivers:
        cfg = replace(config, receiver=r)
        exposed = exposure_pairs(cfg)
        det = detect(cfg, rounds, rng, attacks=attacks)
        failed = det.verdict == CHEATING
        (failing if failed else passing).append((r, exposed))
        per.append({"receiver": r, "failed": failed, "exposed": sorted(sorted(p) for p in exposed)})
    if not failing:
        return LocalizationReport(frozenset(), "clean", tuple(per))
    cleared = set().union(*(e for _, e in passing))
    core = set.intersection(*(e for _, e in failing)) - cleared
    loose = set().union(*(e for _, e in failing)) - cleared
    if len(core) == 1:
        suspects = frozenset().union(*core)
        residual = False
        for r, _ in failing:
            out = tuple(member_index(m) for m in suspects if member_index(m) != r)
            try:
                cfg = replace(config, receiver=r, excluded=out)
            except ConfigurationError:
                continue
            det = detect(cfg, rounds, rng, attacks=attacks)
            per.append({"receiver": r, "excluded": sorted(out), "failed": det.verdict == CHEATING})
            residual = residual or det.verdict == CHEATING
        if not residual:
            return LocalizationReport(suspects, "localized", tuple(per))
    if loose:
        return LocalizationReport(frozenset().union(*loose), "superset", tuple(per))
    return LocalizationReport(frozenset(), "inconclusive", tuple(per))
