"""Bell-pair distribution graph and receiver changes by entanglement swapping.

The standard pattern for members ``B1..BN`` is

    (A, B1), (A, B2), (B_k, B_{k+2}) for k = 1..N-2, (B_{N-1}, B_N)

which is a single cycle through Alice.  Payload qubit 1 travels one way
round the cycle and qubit 2 the other way, meeting at the receiver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigurationError
from .pauli_frame import ALICE, PauliWord2, Route
from .quantum_core import BellLabel


def member(k: int) -> str:
    return f"B{k}"


def member_index(name: str) -> int:
    if not (name.startswith("B") and name[1:].isdigit()):
        raise ConfigurationError(f"not a member id: {name!r}")
    return int(name[1:])


@dataclass(frozen=True)
class BellPair:
    pair_id: int
    ends: tuple[str, str]
    label: BellLabel = BellLabel(0, 0)

    def other(self, party: str) -> str:
        a, b = self.ends
        if party == a:
            return b
        if party == b:
            return a
        raise ConfigurationError(f"{party} is not an endpoint of pair {self.pair_id}")


@dataclass(frozen=True)
class Topology:
    n_parties: int
    pairs: tuple[BellPair, ...]

    @property
    def members(self) -> tuple[str, ...]:
        return tuple(member(k) for k in range(1, self.n_parties + 1))

    def pairs_of(self, party: str) -> list[BellPair]:
        return [p for p in self.pairs if party in p.ends]

    def pair(self, pair_id: int) -> BellPair:
        for p in self.pairs:
            if p.pair_id == pair_id:
                return p
        raise KeyError(pair_id)

    def pair_between(self, a: str, b: str) -> BellPair:
        found = [p for p in self.pairs if set(p.ends) == {a, b}]
        if len(found) != 1:
            raise ConfigurationError(f"expected exactly one pair between {a} and {b}, found {len(found)}")
        return found[0]

    def edge_set(self) -> set[frozenset]:
        return {frozenset(p.ends) for p in self.pairs}

    def cycle(self) -> list[str]:
        """Parties in cycle order starting at Alice, leaving along her first pair."""
        first = min(self.pairs_of(ALICE), key=lambda p: p.pair_id)
        order, prev_pair, here = [ALICE], first, first.other(ALICE)
        while here != ALICE:
            order.append(here)
            nxt = [p for p in self.pairs_of(here) if p.pair_id != prev_pair.pair_id]
            if len(nxt) != 1:
                raise ConfigurationError(f"{here} does not hold exactly two pairs; not a cycle")
            prev_pair, here = nxt[0], nxt[0].other(here)
        if len(order) != len(self.pairs) or len(set(order)) != len(order):
            raise ConfigurationError("pairs do not form a single cycle through Alice")
        return order


def build_topology(n_parties: int, labels: dict[tuple[str, str], Iterable[int]] | None = None) -> Topology:
    """Standard chain pattern for ``n_parties`` members plus Alice's two feeding pairs."""
    if n_parties < 2:
        raise ConfigurationError("parties must be ≥ 2")
    ends = [(ALICE, member(1)), (ALICE, member(2))]
    ends += [(member(k), member(k + 2)) for k in range(1, n_parties - 1)]
    ends.append((member(n_parties - 1), member(n_parties)))
    labels = labels or {}
    pairs = []
    for i, e in enumerate(ends):
        label = labels.get(e, labels.get((e[1], e[0]), (0, 0)))
        pairs.append(BellPair(i, e, BellLabel.of(label)))
    topo = Topology(n_parties, tuple(pairs))
    check_chain_pattern(topo, Route.chain(topo.members))
    return topo


def chain_pairs(order: Sequence[str]) -> set[frozenset]:
    """Pair set the standard pattern prescribes for chain order ``c1..cM``."""
    m = len(order)
    edges = {frozenset((ALICE, order[0])), frozenset((ALICE, order[1]))}
    edges |= {frozenset((order[k], order[k + 2])) for k in range(m - 2)}
    edges.add(frozenset((order[m - 2], order[m - 1])))
    return edges


def check_chain_pattern(topo: Topology, route: Route) -> tuple[str, ...]:
    """Verify the pair pattern invariants for ``route``; return the chain order."""
    order = route.chain_order()
    if order is None:
        raise ConfigurationError(f"route {route.arcs} is not chain shaped")
    if len(topo.pairs) != len(order) + 1:
        raise ConfigurationError("pair count must be active members + 1")
    if len(topo.edge_set()) != len(topo.pairs):
        raise ConfigurationError("two parties share two complete Bell pairs")
    if topo.edge_set() != chain_pairs(order):
        raise ConfigurationError("pairs do not follow the chain pattern")
    return order


def route_for(topo: Topology, receiver: str) -> Route:
    """Paths of the two payload qubits from Alice to ``receiver`` around the cycle.

    The arc with more intermediate members carries payload qubit 1; on a tie
    qubit 1 leaves along Alice's first pair.
    """
    cyc = topo.cycle()
    if receiver not in cyc:
        raise ConfigurationError(f"{receiver} holds no Bell pair and cannot receive")
    p = cyc.index(receiver)
    forward = tuple(cyc[1 : p + 1])
    backward = tuple(reversed(cyc[p:]))
    if len(backward) > len(forward):
        forward, backward = backward, forward
    return Route((forward, backward))


def initial_word(topo: Topology, route: Route) -> PauliWord2:
    """Sum of the channel labels along each payload path."""
    word = PauliWord2()
    for s, arc in enumerate(route.arcs, start=1):
        path = (ALICE,) + arc
        for a, b in zip(path, path[1:]):
            label = topo.pair_between(a, b).label
            word = word.add(s, label.mu, label.nu)
    return word


def swap_topology(topo: Topology, party: str, outcome: Iterable[int]) -> Topology:
    """Rewrite after ``party`` Bell-measures its halves of two distinct pairs.

    The two far endpoints end up sharing ``phi`` labelled by the sum of both
    consumed labels and the measurement outcome.
    """
    held = topo.pairs_of(party)
    if len(held) != 2:
        raise ConfigurationError(f"{party} must hold halves of exactly two pairs to swap, holds {len(held)}")
    p1, p2 = held
    x, y = p1.other(party), p2.other(party)
    if x == y:
        raise ConfigurationError(f"{party} shares both pairs with {x}")
    label = p1.label + p2.label + BellLabel.of(outcome)
    merged = BellPair(max(p.pair_id for p in topo.pairs) + 1, (x, y), label)
    keep = tuple(p for p in topo.pairs if p not in (p1, p2))
    return Topology(topo.n_parties, keep + (merged,))


def receiver_swap_schedule(topo: Topology, receiver: str) -> list[str]:
    """Members that must swap so the chain pattern holds with ``receiver`` last.

    Members are removed from the longer path, nearest the receiver first,
    until the two paths differ by at most one member.
    """
    route = route_for(topo, receiver)
    longer, shorter = (arc[:-1] for arc in route.arcs)
    excess = len(longer) - len(shorter) - 1
    return list(reversed(longer))[:max(excess, 0)]


def paths_after_swaps(topo: Topology, receiver: str) -> Route:
    route = route_for(topo, receiver)
    for m in receiver_swap_schedule(topo, receiver):
        route = route.without(m)
    return route
