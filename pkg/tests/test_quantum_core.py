import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshare import quantum_core as qc
from qshare.errors import (
    ConfigurationError,
    EntangledRetirementError,
    PreconditionError,
    ZeroBranchError,
)
from qshare.quantum_core import BellLabel, QubitRef

S = 1 / np.sqrt(2)
Q = [QubitRef("A", i) for i in range(6)]


def random_qubit(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


@st.composite
def seeds(draw):
    return draw(st.integers(min_value=0, max_value=2**63 - 1))


# ---- register ordering -----------------------------------------------------------------


def test_ordering_convention_position_zero_is_lsb():
    state = qc.make_register(Q[:3])
    state = qc.apply_pauli(state, Q[0], 0, 1)
    assert np.argmax(np.abs(state.amplitudes)) == 0b001
    state = qc.apply_pauli(qc.make_register(Q[:3]), Q[2], 0, 1)
    assert np.argmax(np.abs(state.amplitudes)) == 0b100


def test_extend_appends_high_bits():
    state = qc.apply_pauli(qc.make_register(Q[:1]), Q[0], 0, 1)
    state = qc.extend(state, Q[1:3])
    assert state.qubits == tuple(Q[:3])
    assert np.argmax(np.abs(state.amplitudes)) == 0b001


@pytest.mark.parametrize("qubits, amps", [
    (Q[:1], [1, 0]),
    (Q[:2], [1, 0, 0, 0]),
])
def test_make_register_vacuum(qubits, amps):
    np.testing.assert_array_equal(qc.make_register(qubits).amplitudes, amps)


def test_make_register_rejects_empty_and_duplicates():
    with pytest.raises(ConfigurationError):
        qc.make_register([])
    with pytest.raises(ConfigurationError):
        qc.make_register([Q[0], Q[0]])


# ---- Bell preparation and Paulis ---------------------------------------------------------


@pytest.mark.parametrize("label, amps", [
    ((0, 0), [S, 0, 0, S]),
    ((0, 1), [0, S, S, 0]),
    ((1, 0), [S, 0, 0, -S]),
    ((1, 1), [0, -S, S, 0]),
])
def test_prepare_bell_amplitudes(label, amps):
    state = qc.prepare_bell(qc.make_register(Q[:2]), Q[0], Q[1], BellLabel(*label))
    np.testing.assert_allclose(state.amplitudes, amps, atol=1e-15)


def test_prepare_bell_needs_vacuum():
    state = qc.apply_pauli(qc.make_register(Q[:2]), Q[0], 0, 1)
    with pytest.raises(PreconditionError):
        qc.prepare_bell(state, Q[0], Q[1], BellLabel(0, 0))


def test_apply_pauli_examples():
    zero = qc.make_register(Q[:1])
    np.testing.assert_array_equal(qc.apply_pauli(zero, Q[0], 0, 0).amplitudes, [1, 0])
    np.testing.assert_array_equal(qc.apply_pauli(zero, Q[0], 0, 1).amplitudes, [0, 1])
    plus = qc.from_amplitudes(Q[:1], [S, S])
    np.testing.assert_allclose(qc.apply_pauli(plus, Q[0], 1, 0).amplitudes, [S, -S])


def test_apply_pauli_x_before_z():
    # Z X |0> = Z |1> = -|1>
    out = qc.apply_pauli(qc.make_register(Q[:1]), Q[0], 1, 1)
    np.testing.assert_allclose(out.amplitudes, [0, -1])


def test_apply_pauli_unknown_qubit():
    with pytest.raises(PreconditionError):
        qc.apply_pauli(qc.make_register(Q[:1]), Q[3], 0, 1)


@settings(max_examples=30, deadline=None)
@given(seed=seeds(), z=st.integers(0, 1), x=st.integers(0, 1))
def test_pauli_twice_is_identity(seed, z, x):
    rng = qc.make_rng(seed)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    state = qc.from_amplitudes(Q[:3], v, normalize=True)
    twice = qc.apply_pauli(qc.apply_pauli(state, Q[1], z, x), Q[1], z, x)
    # (ZX)^2 = -I, so compare up to global phase
    assert qc.fidelity(twice, state.amplitudes) == pytest.approx(1, abs=1e-12)
    assert abs(qc.apply_pauli(state, Q[1], z, x).norm() - 1) < qc.NORM_TOL


# ---- Bell measurement --------------------------------------------------------------------


def bell_pair(label):
    return qc.prepare_bell(qc.make_register(Q[:2]), Q[0], Q[1], BellLabel(*label))


def test_measure_bell_eigenstate():
    state = bell_pair((1, 0))
    outcome, post = qc.bell_measure(state, Q[0], Q[1], qc.make_rng(1))
    assert outcome == BellLabel(1, 0)
    assert qc.fidelity(post, state.amplitudes) == pytest.approx(1, abs=1e-12)


def test_measure_vacuum_probabilities():
    probs = qc.bell_probabilities(qc.make_register(Q[:2]), Q[0], Q[1])
    assert probs[BellLabel(0, 0)] == pytest.approx(0.5)
    assert probs[BellLabel(1, 0)] == pytest.approx(0.5)
    assert probs[BellLabel(0, 1)] == pytest.approx(0)
    assert probs[BellLabel(1, 1)] == pytest.approx(0)


def test_teleport_zero_collapses_to_x_power():
    # payload |0> on q, channel phi_00 on (a, b)
    q, a, b = Q[:3]
    state = qc.prepare_bell(qc.make_register([q, a, b]), a, b, BellLabel(0, 0))
    for label in qc.BELL_LABELS:
        prob, post = qc.bell_measure_forced(state, q, a, label)
        assert prob == pytest.approx(0.25, abs=1e-12)
        rho_b = qc.reduced_density(post, [b])
        expect = np.array([1, 0]) if label.nu == 0 else np.array([0, 1])
        assert qc.fidelity(rho_b, expect) == pytest.approx(1, abs=1e-12)


def test_forced_examples():
    assert qc.bell_measure_forced(bell_pair((0, 0)), Q[0], Q[1], (0, 0))[0] == pytest.approx(1)
    with pytest.raises(ZeroBranchError):
        qc.bell_measure_forced(bell_pair((0, 0)), Q[0], Q[1], (1, 1))
    prob, _ = qc.bell_measure_forced(qc.make_register(Q[:2]), Q[0], Q[1], (1, 0))
    assert prob == pytest.approx(0.5)


def test_measure_rejects_same_qubit():
    with pytest.raises(PreconditionError):
        qc.bell_probabilities(bell_pair((0, 0)), Q[0], Q[0])


@settings(max_examples=30, deadline=None)
@given(seed=seeds())
def test_bell_completeness(seed):
    rng = qc.make_rng(seed)
    v = rng.normal(size=16) + 1j * rng.normal(size=16)
    state = qc.from_amplitudes(Q[:4], v, normalize=True)
    i, j = rng.choice(4, size=2, replace=False)
    probs = qc.bell_probabilities(state, Q[i], Q[j])
    assert sum(probs.values()) == pytest.approx(1, abs=1e-12)
    outcome, post = qc.bell_measure(state, Q[i], Q[j], rng)
    assert abs(post.norm() - 1) < qc.NORM_TOL
    assert probs[outcome] > 0


def test_bell_measure_is_seed_deterministic():
    rng_state = qc.make_register(Q[:2])
    a = [qc.bell_measure(rng_state, Q[0], Q[1], qc.make_rng(9))[0] for _ in range(3)]
    assert len(set(a)) == 1


# ---- teleportation identity and linearity ----------------------------------------------


@pytest.mark.parametrize("channel", qc.BELL_LABELS)
@pytest.mark.parametrize("outcome", qc.BELL_LABELS)
def test_teleportation_identity(channel, outcome):
    rng = qc.make_rng(100 + 4 * channel.mu + 2 * channel.nu + outcome.mu)
    q, a, b = Q[:3]
    for _ in range(20):
        psi = random_qubit(rng)
        state = qc.extend(qc.from_amplitudes([q], psi), [a, b])
        state = qc.prepare_bell(state, a, b, channel)
        _, post = qc.bell_measure_forced(state, q, a, outcome)
        post = qc.retire_qubits(post, [q, a])
        fixed = qc.apply_pauli(post, b, channel.mu + outcome.mu, channel.nu + outcome.nu)
        assert qc.fidelity(fixed, psi) == pytest.approx(1, abs=1e-10)


@pytest.mark.parametrize("outcome", qc.BELL_LABELS)
def test_teleporting_half_of_entangled_pair(outcome):
    # phi_00 on (r, q); teleport q through (a, b); corrected (r, b) is phi_00 again
    r, q, a, b = Q[:4]
    state = qc.prepare_bell(qc.make_register([r, q]), r, q, BellLabel(0, 0))
    state = qc.prepare_bell(qc.extend(state, [a, b]), a, b, BellLabel(0, 0))
    _, post = qc.bell_measure_forced(state, q, a, outcome)
    post = qc.retire_qubits(post, [q, a])
    post = qc.apply_pauli(post, b, outcome.mu, outcome.nu)
    assert qc.fidelity(qc.reorder(post, [r, b]), qc.bell_vector(BellLabel(0, 0))) == pytest.approx(1, abs=1e-10)


def test_swap_label_convention_dense():
    # (x, b1) in phi_00 and (b2, y) in phi_00; Bell measurement at b1, b2 with outcome o
    # leaves (x, y) in phi_o
    x, b1, b2, y = Q[:4]
    state = qc.prepare_bell(qc.make_register([x, b1, b2, y]), x, b1, BellLabel(0, 0))
    state = qc.prepare_bell(state, b2, y, BellLabel(0, 0))
    for o in qc.BELL_LABELS:
        prob, post = qc.bell_measure_forced(state, b1, b2, o)
        assert prob == pytest.approx(0.25)
        rest = qc.reorder(qc.retire_qubits(post, [b1, b2]), [x, y])
        assert qc.fidelity(rest, qc.bell_vector(o)) == pytest.approx(1, abs=1e-12)


# ---- retirement and reduced states ---------------------------------------------------------


def test_retire_measured_pair():
    q, a, b = Q[:3]
    state = qc.prepare_bell(qc.extend(qc.from_amplitudes([q], [0.6, 0.8]), [a, b]), a, b, BellLabel(0, 0))
    _, post = qc.bell_measure_forced(state, q, a, (0, 0))
    out = qc.retire_qubits(post, [q, a])
    assert out.n_qubits == 1
    assert out.amplitudes.size == post.amplitudes.size // 4
    assert qc.fidelity(out, [0.6, 0.8]) == pytest.approx(1, abs=1e-12)


def test_retire_half_of_bell_pair_fails():
    with pytest.raises(EntangledRetirementError):
        qc.retire_qubits(bell_pair((0, 0)), [Q[0]])


def test_retire_nothing_is_identity():
    state = bell_pair((0, 1))
    assert qc.retire_qubits(state, []) is state


def test_reduced_density_examples():
    half = qc.reduced_density(bell_pair((0, 0)), [Q[0]])
    np.testing.assert_allclose(half.matrix, np.eye(2) / 2, atol=1e-15)
    prod = qc.apply_pauli(qc.make_register(Q[:2]), Q[1], 0, 1)  # |q0=0, q1=1>
    rho = qc.reduced_density(prod, Q[:2])
    assert np.linalg.matrix_rank(rho.matrix) == 1
    assert qc.fidelity(rho, prod.amplitudes) == pytest.approx(1)
    with pytest.raises((ConfigurationError, PreconditionError)):
        qc.reduced_density(prod, [])


def test_single_run_marginal_can_be_pure():
    # payload |00> fed with Alice outcomes (0,0): each carrier is |0>
    p1, p2, a1, b1, a2, b2 = Q[:6]
    state = qc.extend(qc.make_register([p1, p2]), [a1, b1, a2, b2])
    state = qc.prepare_bell(state, a1, b1, BellLabel(0, 0))
    state = qc.prepare_bell(state, a2, b2, BellLabel(0, 0))
    _, state = qc.bell_measure_forced(state, p1, a1, (0, 0))
    _, state = qc.bell_measure_forced(state, p2, a2, (0, 0))
    rho = qc.reduced_density(state, [b1])
    np.testing.assert_allclose(rho.matrix, [[1, 0], [0, 0]], atol=1e-12)


# ---- metrics -------------------------------------------------------------------------------


def test_fidelity_examples():
    rng = qc.make_rng(3)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    v /= np.linalg.norm(v)
    assert qc.fidelity(qc.from_amplitudes(Q[:2], v), v) == pytest.approx(1)
    assert qc.fidelity(qc.maximally_mixed(2), v) == pytest.approx(0.25)
    assert qc.fidelity(qc.make_register(Q[:2]), [0, 1, 0, 0]) == 0
    with pytest.raises((ConfigurationError, PreconditionError)):
        qc.fidelity(qc.make_register(Q[:2]), [1, 0])


def test_trace_distance_examples():
    zero = np.diag([1.0, 0.0])
    one = np.diag([0.0, 1.0])
    assert qc.trace_distance(zero, zero) == pytest.approx(0)
    assert qc.trace_distance(zero, one) == pytest.approx(1)
    assert qc.trace_distance(np.eye(2) / 2, zero) == pytest.approx(0.5)
    with pytest.raises((ConfigurationError, PreconditionError)):
        qc.trace_distance(zero, np.eye(4) / 4)


def test_density_check():
    qc.reduced_density(bell_pair((1, 1)), [Q[1]]).check()
    with pytest.raises(Exception):
        qc.DensityMatrix(Q[:1], np.array([[1, 1], [0, 0]], dtype=complex)).check()


def test_rng_replayable():
    a = qc.make_rng(2**64 - 1).random(5)
    b = qc.make_rng(2**64 - 1).random(5)
    np.testing.assert_array_equal(a, b)
