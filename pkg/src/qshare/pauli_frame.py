"""Amplitude-free bookkeeping of the sharing protocol.

The carried two-qubit state is always ``W chi`` for some Pauli word ``W``
(up to a global phase).  Every teleportation hop through a channel
``phi_{mu,nu}`` with outcome ``(mu', nu')`` multiplies the moving qubit's
part of ``W`` by ``Z^(mu+mu') X^(nu+nu')``, so the whole run reduces to
exponent arithmetic mod 2.  Nothing here touches amplitudes; the dense
engine is checked against these predictions, never the other way round.

A :class:`Route` fixes which members each payload qubit visits.  The member
currently holding a payload qubit for the longest time (the elder holder)
is the one who passes next; on the standard chain this alternates between
the two payload slots.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import ConfigurationError, ProtocolOrderError
from .quantum_core import BellLabel

ALICE = "A"


@dataclass(frozen=True)
class PauliWord2:
    """Exponents of ``Z^z1 X^x1 (x) Z^z2 X^x2`` on payload slots 1 and 2."""

    z1: int = 0
    x1: int = 0
    z2: int = 0
    x2: int = 0

    def __post_init__(self):
        for v in (self.z1, self.x1, self.z2, self.x2):
            if v not in (0, 1):
                raise ConfigurationError(f"Pauli exponents must be bits, got {self}")

    def __mul__(self, other: "PauliWord2") -> "PauliWord2":
        # exponent addition; the global sign from reordering X and Z is dropped
        return PauliWord2(self.z1 ^ other.z1, self.x1 ^ other.x1,
                          self.z2 ^ other.z2, self.x2 ^ other.x2)

    def slot(self, s: int) -> tuple[int, int]:
        return (self.z1, self.x1) if s == 1 else (self.z2, self.x2)

    def add(self, s: int, z: int, x: int) -> "PauliWord2":
        if s == 1:
            return replace(self, z1=(self.z1 + z) % 2, x1=(self.x1 + x) % 2)
        if s == 2:
            return replace(self, z2=(self.z2 + z) % 2, x2=(self.x2 + x) % 2)
        raise ConfigurationError(f"payload slot must be 1 or 2, got {s}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.z1, self.x1, self.z2, self.x2)

    @classmethod
    def from_slots(cls, first: Sequence[int], second: Sequence[int]) -> "PauliWord2":
        return cls(int(first[0]) % 2, int(first[1]) % 2, int(second[0]) % 2, int(second[1]) % 2)

    @property
    def is_identity(self) -> bool:
        return self.as_tuple() == (0, 0, 0, 0)


ALL_WORDS = tuple(PauliWord2(a, b, c, d) for a in (0, 1) for b in (0, 1)
                  for c in (0, 1) for d in (0, 1))


@dataclass(frozen=True)
class Route:
    """Members visited by each payload qubit after leaving Alice.

    ``arcs[0]`` is the path of payload qubit 1 and ``arcs[1]`` that of
    qubit 2; both end at the receiver.  Every other member sits on exactly
    one arc.
    """

    arcs: tuple[tuple[str, ...], tuple[str, ...]]

    def __post_init__(self):
        a1, a2 = self.arcs
        if not a1 or not a2 or a1[-1] != a2[-1]:
            raise ConfigurationError(f"both arcs must end at the same receiver: {self.arcs}")
        inner = a1[:-1] + a2[:-1]
        if len(set(inner)) != len(inner) or self.receiver in inner or ALICE in inner + (self.receiver,):
            raise ConfigurationError(f"malformed route {self.arcs}")

    @property
    def receiver(self) -> str:
        return self.arcs[0][-1]

    @property
    def members(self) -> tuple[str, ...]:
        return self.arcs[0][:-1] + self.arcs[1][:-1] + (self.receiver,)

    def slot_of(self, member: str) -> int:
        for s, arc in enumerate(self.arcs, start=1):
            if member in arc[:-1]:
                return s
        raise ConfigurationError(f"{member} does not pass a payload qubit on this route")

    @classmethod
    def chain(cls, order: Sequence[str]) -> "Route":
        """Route of the standard chain ``c1..cM`` (receiver ``cM``)."""
        order = tuple(order)
        if len(order) < 2:
            raise ConfigurationError("a chain needs at least two members")
        *inner, receiver = order
        return cls((tuple(inner[0::2]) + (receiver,), tuple(inner[1::2]) + (receiver,)))

    def chain_order(self) -> tuple[str, ...] | None:
        """Interleaved member order if the arcs have standard-chain shape."""
        a, b = (arc[:-1] for arc in self.arcs)
        if len(a) - len(b) not in (0, 1):
            return None
        out = []
        for i in range(len(a)):
            out.append(a[i])
            if i < len(b):
                out.append(b[i])
        return tuple(out) + (self.receiver,)

    def without(self, member: str, new_receiver: str | None = None) -> "Route":
        """Route after ``member`` leaves by entanglement swapping."""
        if member == self.receiver:
            ends = {arc[-2] if len(arc) > 1 else ALICE for arc in self.arcs}
            if new_receiver not in ends or new_receiver == ALICE:
                raise ConfigurationError(
                    f"after swapping at the receiver the new receiver must be one of {sorted(ends - {ALICE})}"
                )
            a1, a2 = (arc[:-1] for arc in self.arcs)
            if a1 and a1[-1] == new_receiver:
                return Route((a1, a2 + (new_receiver,)))
            return Route((a1 + (new_receiver,), a2))
        if new_receiver not in (None, self.receiver):
            raise ConfigurationError("only a swap at the receiver can move the receiver")
        s = self.slot_of(member)
        arcs = list(self.arcs)
        arcs[s - 1] = tuple(m for m in arcs[s - 1] if m != member)
        return Route((arcs[0], arcs[1]))


def swap_slot(route: Route, member: str, new_receiver: str | None = None) -> int:
    """Payload slot whose path absorbs the pair created by a swap at ``member``."""
    if member != route.receiver:
        return route.slot_of(member)
    after = route.without(member, new_receiver)
    # the slot whose arc grew by the new receiver uses the merged pair last
    return 1 if len(after.arcs[0]) == len(route.arcs[0]) else 2


@dataclass(frozen=True)
class FrameState:
    """Oracle state: where each payload qubit is and the word correcting it."""

    route: Route
    frame: PauliWord2 = PauliWord2()
    positions: tuple[int, int] = (-1, -1)
    arrivals: tuple[int, int] = (0, 0)
    step_index: int = 0
    clock: int = 0

    @property
    def fed(self) -> bool:
        return self.positions != (-1, -1)

    @property
    def holder_pair(self) -> tuple[str, str]:
        if not self.fed:
            return (ALICE, ALICE)
        return (self.route.arcs[0][self.positions[0]], self.route.arcs[1][self.positions[1]])

    @property
    def delivered(self) -> bool:
        return self.fed and all(h == self.route.receiver for h in self.holder_pair)

    def moving_slot(self) -> int:
        """Slot of the elder holder that passes next."""
        if not self.fed:
            raise ProtocolOrderError("nothing to pass before feeding")
        movable = [s for s in (1, 2) if self.holder_pair[s - 1] != self.route.receiver]
        if not movable:
            raise ProtocolOrderError("payload already delivered; no pass remains")
        return min(movable, key=lambda s: (self.arrivals[s - 1], s))


def frame_start(route: Route, initial: PauliWord2 = PauliWord2()) -> FrameState:
    """Pre-feed frame; ``initial`` carries the channel labels along each path."""
    return FrameState(route=route, frame=initial)


def frame_feed(alice_outcomes: Sequence[Iterable[int]], route: Route,
               channel_labels: Sequence[Iterable[int]] = ((0, 0), (0, 0)),
               start: FrameState | None = None) -> FrameState:
    """Frame after Alice teleports payload qubits 1 and 2 into the chain."""
    state = start if start is not None else frame_start(route)
    if state.fed:
        raise ProtocolOrderError("payload already fed")
    word = state.frame
    for s, (outcome, channel) in enumerate(zip(alice_outcomes, channel_labels), start=1):
        o, c = BellLabel.of(outcome), BellLabel.of(channel)
        word = word.add(s, o.mu + c.mu, o.nu + c.nu)
    return replace(state, frame=word, positions=(0, 0), arrivals=(0, 1), clock=2)


def frame_pass(frame: FrameState, outcome: Iterable[int],
               channel_label: Iterable[int] = (0, 0)) -> FrameState:
    """Elder holder teleports its payload qubit one hop along its arc."""
    if frame.delivered:
        raise ProtocolOrderError("pass requested after the final step")
    s = frame.moving_slot()
    o, c = BellLabel.of(outcome), BellLabel.of(channel_label)
    positions = list(frame.positions)
    arrivals = list(frame.arrivals)
    positions[s - 1] += 1
    arrivals[s - 1] = frame.clock
    return replace(frame, frame=frame.frame.add(s, o.mu + c.mu, o.nu + c.nu),
                   positions=(positions[0], positions[1]),
                   arrivals=(arrivals[0], arrivals[1]),
                   step_index=frame.step_index + 1, clock=frame.clock + 1)


def frame_swap(frame: FrameState, member: str, outcome: Iterable[int],
               new_receiver: str | None = None,
               moved_label: Iterable[int] = (0, 0)) -> FrameState:
    """Member merges its two unused pairs; the outcome joins the merged pair's label.

    For a swap at the receiver, ``moved_label`` is the label of the pair
    between the old and the new receiver: it leaves one path and joins the
    other.
    """
    if member in frame.holder_pair:
        raise ProtocolOrderError(f"{member} holds a payload qubit and cannot swap")
    route = frame.route
    s = swap_slot(route, member, new_receiver)
    if frame.fed:
        arc = route.arcs[s - 1]
        if member != route.receiver and arc.index(member) < frame.positions[s - 1]:
            raise ProtocolOrderError(f"{member} was already passed by payload qubit {s}")
    new_route = route.without(member, new_receiver)
    o, moved = BellLabel.of(outcome), BellLabel.of(moved_label)
    word = frame.frame.add(s, o.mu + moved.mu, o.nu + moved.nu).add(3 - s, moved.mu, moved.nu)
    positions = frame.positions
    if frame.fed and member == route.receiver:
        # the holder of the shortened arc now sits at the new receiver index
        positions = tuple(min(p, len(a) - 1) for p, a in zip(positions, new_route.arcs))
    return replace(frame, route=new_route, frame=word, positions=positions)


def frame_retrieval(frame: FrameState) -> PauliWord2:
    """Correction word the receiver applies once every pass is done."""
    if not frame.delivered:
        raise ProtocolOrderError("retrieval word requested before delivery")
    return frame.frame


def pass_schedule(route: Route) -> list[tuple[str, int]]:
    """``(actor, moving slot)`` for every pass step, in protocol order."""
    frame = frame_feed(((0, 0), (0, 0)), route)
    out = []
    while not frame.delivered:
        s = frame.moving_slot()
        out.append((frame.holder_pair[s - 1], s))
        frame = frame_pass(frame, (0, 0))
    return out


def replay(route: Route, events: Sequence[tuple], initial: PauliWord2 = PauliWord2()) -> FrameState:
    """Rebuild the frame from public information only.

    ``events`` are ``(kind, actor, outcome, slot_or_receiver)`` tuples in
    measurement order, ``kind`` being ``"feed"``, ``"pass"`` or ``"swap"``.
    For feed events the last field is the payload slot; for swaps it is the
    pair ``(receiver directive or None, moved label)``.
    """
    frame = frame_start(route, initial)
    pending: dict[int, BellLabel] = {}
    for kind, actor, outcome, extra in events:
        if kind == "feed":
            pending[int(extra)] = BellLabel.of(outcome)
            if len(pending) == 2:
                frame = frame_feed((pending[1], pending[2]), frame.route, start=frame)
        elif kind == "pass":
            if frame.holder_pair[frame.moving_slot() - 1] != actor:
                raise ProtocolOrderError(f"{actor} is not the elder holder at this step")
            frame = frame_pass(frame, outcome)
        elif kind == "swap":
            directive, moved = extra if extra is not None else (None, (0, 0))
            frame = frame_swap(frame, actor, outcome, directive, moved)
        else:
            raise ConfigurationError(f"unknown event kind {kind!r}")
    return frame
