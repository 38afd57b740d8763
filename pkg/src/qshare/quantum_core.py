"""Dense state-vector engine for Bell-pair protocols.

Ordering convention: register position ``i`` is bit ``i`` of the amplitude
index, position 0 being the least-significant bit.  A two-qubit register
``[q1, q2]`` therefore stores ``|b1 b2>`` at index ``b1 + 2*b2``.

Every operation is functional: it returns a new :class:`StateVector` and
leaves its input untouched.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import (
    ConfigurationError,
    EntangledRetirementError,
    InternalError,
    PreconditionError,
    ZeroBranchError,
)

NORM_TOL = 1e-12
ZERO_BRANCH_TOL = 1e-13
SCHMIDT_TOL = 1e-10
MAX_AMPLITUDES = 2**24

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


class BellLabel(NamedTuple):
    """Bell basis label ``(mu, nu)`` naming ``phi_{mu,nu}``."""

    mu: int
    nu: int

    @classmethod
    def of(cls, value: Iterable[int]) -> "BellLabel":
        mu, nu = (int(v) for v in value)
        if mu not in (0, 1) or nu not in (0, 1):
            raise ConfigurationError(f"Bell label bits must be 0/1, got {(mu, nu)}")
        return cls(mu, nu)

    def __add__(self, other):  # type: ignore[override]
        return BellLabel((self.mu + other[0]) % 2, (self.nu + other[1]) % 2)


BELL_LABELS = tuple(BellLabel(mu, nu) for mu in (0, 1) for nu in (0, 1))


class QubitRef(NamedTuple):
    owner: str
    slot: int

    def __str__(self) -> str:
        return f"{self.owner}.{self.slot}"


def bell_vector(label: BellLabel) -> np.ndarray:
    """Amplitudes of ``phi_{mu,nu}`` on ``[q1, q2]`` (q1 least significant)."""
    mu, nu = label
    vec = np.zeros(4, dtype=complex)
    for k in (0, 1):
        vec[k + 2 * ((k + nu) % 2)] = (-1) ** (mu * k) * _INV_SQRT2
    return vec


_BELL_BASIS = {label: bell_vector(label) for label in BELL_LABELS}


@dataclass(frozen=True)
class StateVector:
    qubits: tuple[QubitRef, ...]
    amplitudes: np.ndarray

    def __post_init__(self):
        if len(set(self.qubits)) != len(self.qubits):
            raise ConfigurationError("duplicate qubit in register")
        if self.amplitudes.shape != (2 ** len(self.qubits),):
            raise InternalError("amplitude array does not match register size")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    def index(self, q: QubitRef) -> int:
        try:
            return self.qubits.index(q)
        except ValueError:
            raise PreconditionError(f"qubit {q} is not in the register") from None

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def _axis(self, q: QubitRef) -> int:
        return self.n_qubits - 1 - self.index(q)

    def axes(self, qubits: Sequence[QubitRef]) -> list[int]:
        n = len(self.qubits)
        pos = {q: i for i, q in enumerate(self.qubits)}
        try:
            return [n - 1 - pos[q] for q in qubits]
        except KeyError as exc:
            raise PreconditionError(f"qubit {exc.args[0]} is not in the register") from None

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_qubits)


@dataclass(frozen=True)
class DensityMatrix:
    qubits: tuple[QubitRef, ...]
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def check(self, tol: float = NORM_TOL) -> None:
        m = self.matrix
        if not np.allclose(m, m.conj().T, atol=tol):
            raise InternalError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > tol:
            raise InternalError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise InternalError("density matrix is not positive semidefinite")


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic, replayable random stream from a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


def make_register(qubits: Sequence[QubitRef]) -> StateVector:
    qubits = tuple(qubits)
    if not qubits:
        raise ConfigurationError("register needs at least one qubit")
    if 2 ** len(qubits) > MAX_AMPLITUDES:
        raise ConfigurationError(f"register of {len(qubits)} qubits exceeds the dense cap")
    amps = np.zeros(2 ** len(qubits), dtype=complex)
    amps[0] = 1.0
    return StateVector(qubits, amps)


def extend(state: StateVector, qubits: Sequence[QubitRef]) -> StateVector:
    """Append fresh ``|0>`` qubits as the new most-significant positions."""
    qubits = tuple(qubits)
    if not qubits:
        return state
    n = state.n_qubits + len(qubits)
    if 2**n > MAX_AMPLITUDES:
        raise ConfigurationError(f"register of {n} qubits exceeds the dense cap")
    amps = np.zeros(2**n, dtype=complex)
    amps[: state.amplitudes.size] = state.amplitudes
    return StateVector(state.qubits + qubits, amps)


def from_amplitudes(qubits: Sequence[QubitRef], amplitudes, normalize: bool = False) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex).ravel().copy()
    norm = np.vdot(amps, amps).real
    if norm < ZERO_BRANCH_TOL:
        raise ConfigurationError("state has zero norm")
    if normalize:
        amps /= np.sqrt(norm)
    elif abs(norm - 1) > NORM_TOL:
        raise ConfigurationError(f"state is not normalized (norm^2 = {norm!r})")
    return StateVector(tuple(qubits), amps)


def _split(state: StateVector, rows: Sequence[QubitRef]) -> tuple[np.ndarray, list[QubitRef]]:
    """Matrix view with ``rows`` (LSB-first) as row index, the rest as columns."""
    rows = list(rows)
    chosen = set(rows)
    rest = [q for q in state.qubits if q not in chosen]
    # C-order reshape puts the first axis most significant, hence reversed()
    src = state.axes(rows[::-1] + rest[::-1])
    t = np.transpose(state.tensor(), src)
    return t.reshape(2 ** len(rows), -1), rest


def _join(matrix: np.ndarray, rows: Sequence[QubitRef], rest: Sequence[QubitRef],
          order: Sequence[QubitRef]) -> StateVector:
    layout = list(rows)[::-1] + list(rest)[::-1]
    t = matrix.reshape((2,) * len(layout))
    pos = {q: i for i, q in enumerate(layout)}
    dst = [pos[q] for q in reversed(order)]
    return StateVector(tuple(order), np.ascontiguousarray(np.transpose(t, dst)).reshape(-1))


def _pair_check(state: StateVector, q1: QubitRef, q2: QubitRef) -> None:
    if q1 == q2:
        raise PreconditionError("Bell operation needs two distinct qubits")
    state.index(q1)
    state.index(q2)


def prepare_bell(state: StateVector, q1: QubitRef, q2: QubitRef, label: BellLabel) -> StateVector:
    """Turn ``|00>`` on ``(q1, q2)`` into ``phi_{label}``."""
    _pair_check(state, q1, q2)
    m, rest = _split(state, [q1, q2])
    if np.vdot(m[1:], m[1:]).real > NORM_TOL:
        raise PreconditionError(f"qubits {q1}, {q2} are not in |00>")
    out = np.outer(_BELL_BASIS[BellLabel.of(label)], m[0])
    return _join(out, [q1, q2], rest, state.qubits)


def apply_pauli(state: StateVector, q: QubitRef, z_exp: int, x_exp: int) -> StateVector:
    """Apply ``Z**z_exp @ X**x_exp`` to ``q``."""
    axis = state._axis(q)
    t = state.tensor()
    if x_exp % 2:
        t = np.flip(t, axis=axis)
    if z_exp % 2:
        t = t.copy()
        idx = [slice(None)] * state.n_qubits
        idx[axis] = 1
        t[tuple(idx)] *= -1
    return StateVector(state.qubits, np.ascontiguousarray(t).reshape(-1))


def _bell_coefficients(state: StateVector, q1: QubitRef, q2: QubitRef):
    _pair_check(state, q1, q2)
    m, rest = _split(state, [q1, q2])
    coeffs = {label: vec.conj() @ m for label, vec in _BELL_BASIS.items()}
    probs = {label: float(np.vdot(c, c).real) for label, c in coeffs.items()}
    return coeffs, probs, rest


def bell_probabilities(state: StateVector, q1: QubitRef, q2: QubitRef) -> dict[BellLabel, float]:
    return _bell_coefficients(state, q1, q2)[1]


def _collapse(state, q1, q2, label, coeffs, probs, rest) -> StateVector:
    post = np.outer(_BELL_BASIS[label], coeffs[label] / np.sqrt(probs[label]))
    return _join(post, [q1, q2], rest, state.qubits)


def bell_measure(state: StateVector, q1: QubitRef, q2: QubitRef,
                 rng: np.random.Generator) -> tuple[BellLabel, StateVector]:
    """Born-rule Bell measurement of ``(q1, q2)``; the pair is left in the outcome state."""
    coeffs, probs, rest = _bell_coefficients(state, q1, q2)
    labels = list(probs)
    weights = np.array([probs[l] for l in labels])
    total = weights.sum()
    if abs(total - 1) > 1e-9:
        raise InternalError(f"Bell probabilities sum to {total!r}")
    cum = np.cumsum(weights)
    pick = int(np.searchsorted(cum, rng.random() * total, side="right"))
    nonzero = [i for i, w in enumerate(weights) if w >= ZERO_BRANCH_TOL]
    choice = labels[pick] if pick in nonzero else labels[nonzero[-1]]
    return choice, _collapse(state, q1, q2, choice, coeffs, probs, rest)


def bell_measure_forced(state: StateVector, q1: QubitRef, q2: QubitRef,
                        outcome: BellLabel) -> tuple[float, StateVector]:
    outcome = BellLabel.of(outcome)
    coeffs, probs, rest = _bell_coefficients(state, q1, q2)
    prob = probs[outcome]
    if prob < ZERO_BRANCH_TOL:
        raise ZeroBranchError(f"Bell outcome {tuple(outcome)} has probability {prob:.3g}")
    return prob, _collapse(state, q1, q2, outcome, coeffs, probs, rest)


def retire_qubits(state: StateVector, qubits: Sequence[QubitRef]) -> StateVector:
    """Drop ``qubits`` from the register, provided they factor out exactly."""
    qubits = list(qubits)
    if not qubits:
        return state
    state.axes(qubits)
    if len(qubits) >= state.n_qubits:
        raise PreconditionError("cannot retire every qubit of a register")
    m, rest = _split(state, qubits)
    # rank-1 test against the heaviest row; the residual bounds the second Schmidt value
    top = m[np.argmax(np.einsum("ij,ij->i", m.conj(), m).real)]
    kept = top / np.linalg.norm(top)
    residual = np.linalg.norm(m - np.outer(m @ kept.conj(), kept))
    if residual > SCHMIDT_TOL:
        raise EntangledRetirementError(
            f"retired qubits carry Schmidt residual {residual:.3g} with the remainder"
        )
    # column index of m already follows the LSB-first convention over `rest`
    return StateVector(tuple(rest), kept)


def reorder(state: StateVector, qubits: Sequence[QubitRef]) -> StateVector:
    """Same state with the register listed in a new order."""
    qubits = tuple(qubits)
    if set(qubits) != set(state.qubits) or len(qubits) != state.n_qubits:
        raise ConfigurationError("reorder needs a permutation of the register")
    m, rest = _split(state, list(qubits))
    return StateVector(qubits, m.reshape(-1).copy())


def reduced_density(state: StateVector, keep: Sequence[QubitRef]) -> DensityMatrix:
    keep = list(keep)
    if not keep:
        raise ConfigurationError("reduced_density needs at least one qubit to keep")
    if len(set(keep)) != len(keep):
        raise ConfigurationError("duplicate qubit in keep list")
    m, _ = _split(state, keep)
    rho = m @ m.conj().T
    return DensityMatrix(tuple(keep), rho)


def pure_density(state: StateVector) -> DensityMatrix:
    a = state.amplitudes
    return DensityMatrix(state.qubits, np.outer(a, a.conj()))


def maximally_mixed(n_qubits: int) -> DensityMatrix:
    d = 2**n_qubits
    return DensityMatrix((), np.eye(d, dtype=complex) / d)


StateLike = Union[StateVector, DensityMatrix, np.ndarray]


def _as_matrix(a: StateLike) -> np.ndarray:
    if isinstance(a, StateVector):
        a = a.amplitudes
    elif isinstance(a, DensityMatrix):
        a = a.matrix
    a = np.asarray(a, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


def _as_vector(b) -> np.ndarray:
    if isinstance(b, StateVector):
        return b.amplitudes
    b = np.asarray(b, dtype=complex)
    if b.ndim != 1:
        raise ConfigurationError("the reference state of fidelity must be pure")
    return b


def fidelity(a: StateLike, b) -> float:
    """Overlap ``<b|rho_a|b>`` between any state ``a`` and a pure state ``b``."""
    vb = _as_vector(b)
    if isinstance(a, StateVector) or (isinstance(a, np.ndarray) and a.ndim == 1):
        va = _as_vector(a)
        if va.shape != vb.shape:
            raise ConfigurationError(f"dimension mismatch {va.shape} vs {vb.shape}")
        f = abs(np.vdot(vb, va)) ** 2
    else:
        rho = _as_matrix(a)
        if rho.shape != (vb.size, vb.size):
            raise ConfigurationError(f"dimension mismatch {rho.shape} vs {vb.shape}")
        f = np.vdot(vb, rho @ vb).real
    return float(min(max(f, 0.0), 1.0))


def trace_distance(a: StateLike, b: StateLike) -> float:
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape != mb.shape:
        raise ConfigurationError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    eig = np.linalg.eigvalsh(ma - mb)
    return float(min(0.5 * np.abs(eig).sum(), 1.0))


def append_state(state: StateVector, qubits: Sequence[QubitRef], amplitudes) -> StateVector:
    """Tensor a normalized state on fresh ``qubits`` onto the register."""
    new = from_amplitudes(qubits, amplitudes)
    if set(new.qubits) & set(state.qubits):
        raise ConfigurationError("appended qubits already in the register")
    n = state.n_qubits + new.n_qubits
    if 2**n > MAX_AMPLITUDES:
        raise ConfigurationError(f"register of {n} qubits exceeds the dense cap")
    # new qubits take the high bits
    return StateVector(state.qubits + new.qubits, np.kron(new.amplitudes, state.amplitudes))
