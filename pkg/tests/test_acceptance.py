"""Acceptance criteria, one test each.

Every test prints a ``PASS``/``FAIL`` line with the measured quantity before
asserting, so ``pytest -v`` output doubles as the acceptance report.
"""
import random
import time

import numpy as np
import pytest

from qshare import adversary as adv
from qshare import netsim
from qshare import protocol_engine as pe
from qshare import quantum_core as qc
from qshare import resource_audit as ra
from qshare.pauli_frame import PauliWord2

TOL = 1e-10


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail
    return emit


def random_payload(rng):
    return pe.TwoQubitState.random(rng)


def test_criterion_01_exhaustive_exactness(verdict):
    start = time.perf_counter()
    worst, sums, counts = 1.0, {}, {}
    for n in (2, 3):
        branches = list(pe.enumerate_branches(pe.ProtocolConfig(n, payload=random_payload(qc.make_rng(n)))))
        counts[n] = len(branches)
        sums[n] = sum(b.probability for b in branches)
        worst = min(worst, min(b.fidelity for b in branches))
    elapsed = time.perf_counter() - start
    ok = (worst >= 1 - TOL and all(abs(s - 1) <= 1e-9 for s in sums.values())
          and counts == {2: 64, 3: 256} and elapsed < 10)
    verdict(1, ok, f"branches {counts}, min fidelity {worst:.15f}, "
                   f"probability sums {[f'{s:.12f}' for s in sums.values()]}, {elapsed:.2f}s")


def test_criterion_02_sampled_exactness(verdict):
    start = time.perf_counter()
    rng = qc.make_rng(2024)
    worst, runs = 1.0, 0
    for n in range(4, 9):
        for _ in range(100):
            seed = int(rng.integers(2**63))
            for _ in range(5):
                report = pe.run_full(pe.ProtocolConfig(n, seed=seed, payload=random_payload(rng)))
                worst = min(worst, report.fidelity)
                runs += 1
    elapsed = time.perf_counter() - start
    verdict(2, worst >= 1 - TOL and elapsed < 60 and runs == 2500,
            f"{runs} runs, min fidelity {worst:.15f}, {elapsed:.2f}s")


def test_criterion_03_oracle_equivalence(verdict):
    total, agree = 0, 0
    for n in (2, 3):
        for b in pe.enumerate_branches(pe.ProtocolConfig(n, payload=random_payload(qc.make_rng(n)))):
            total += 1
            agree += b.optimal == (b.correction,)
    verdict(3, total == 320 and agree == total, f"{agree}/{total} branches agree with the dense optimum")


def test_criterion_04_two_party_reduction(verdict):
    # R = Omega * (Z^m X^n on the slot Bob teleported); Omega from Alice's two outcomes
    matches, exact = 0, 0
    branches = list(pe.enumerate_branches(pe.ProtocolConfig(2, payload=random_payload(qc.make_rng(4)))))
    for b in branches:
        (mu, i), (nu, j), (m, n) = b.outcomes
        expected = PauliWord2(mu, i, nu, j) * PauliWord2(m, n, 0, 0)
        matches += b.correction == expected and b.optimal == (expected,)
        exact += b.fidelity >= 1 - TOL
    verdict(4, len(branches) == 64 and matches == 64 and exact == 64,
            f"{matches}/64 corrections of the form Omega*(Z^m X^n x I), {exact}/64 exact")


def test_criterion_05_security_twirl(verdict):
    rng = qc.make_rng(5)
    holdings = [("B1", 0), ("B2", 0), ("B2", 1), ("B3", 1), ("B3", 2)]
    controller_outcomes = [qc.BELL_LABELS[k] for k in rng.integers(4, size=2)]
    worst_mixed, worst_spread = 0.0, 0.0
    refs = {}
    for _ in range(10):
        cfg = pe.ProtocolConfig(4, payload=random_payload(rng))
        for party, passes in holdings:
            rho = adv.withheld_average(cfg, party, passes, controller_outcomes)
            d = rho.shape[0]
            worst_mixed = max(worst_mixed, qc.trace_distance(rho, np.eye(d) / d))
            ref = refs.setdefault((party, passes), rho)
            worst_spread = max(worst_spread, qc.trace_distance(rho, ref))
    verdict(5, worst_mixed <= 1e-12 and worst_spread <= 1e-12,
            f"max distance to maximally mixed {worst_mixed:.2e}, payload spread {worst_spread:.2e}")


def test_criterion_06_resource_table(verdict):
    bad = []
    for n in range(2, 11):
        report = pe.run_full(pe.ProtocolConfig(n, seed=n))
        if ra.audit(report).counts != (n + 1, 0, 4, 2 * (n - 1)):
            bad.append(("audit", n))
        if ra.ledger_formula(ra.RIVAL_SCHEME, n).counts != (2 * n, 2, 2 * (n + 1), 2 * (n - 1)):
            bad.append(("rival", n))
    table = ra.format_table(ra.comparison_rows([3]))
    lines = [line.split() for line in table.splitlines()[2:]]
    ok = not bad and lines == [["3", "this_paper", "4", "0", "4", "4"], ["3", "rival", "6", "2", "8", "4"]]
    verdict(6, ok, f"mismatches {bad}; N=3 table:\n{table}")


def test_criterion_07_receiver_change(verdict):
    results = {}
    for r in range(1, 5):
        report = pe.run_full(pe.ProtocolConfig(4, seed=r, receiver=r, payload=random_payload(qc.make_rng(r))))
        results[f"B{r}"] = (report.fidelity, report.extra_swaps)
    ok = all(f >= 1 - TOL for f, _ in results.values())
    verdict(7, ok, "receiver -> (fidelity, swaps) " + ", ".join(
        f"{k}: ({f:.12f}, {s})" for k, (f, s) in results.items()))


def test_criterion_08_collusion(verdict):
    rng = qc.make_rng(8)
    after, before, mixed = 1.0, [], 0.0
    for n, pos in [(3, (1, 2)), (4, (2, 3)), (5, (2, 3)), (6, (3, 4)), (6, (1, 2))]:
        for _ in range(4):
            cfg = pe.ProtocolConfig(n, seed=int(rng.integers(2**32)), payload=random_payload(rng))
            report = adv.run_collusion(cfg, adv.AttackSpec(pos))
            after = min(after, report.captured_fidelity_after)
            before.append(report.captured_fidelity_before)
            mixed = max(mixed, report.captured_mixedness)
    spread = max(abs(f - 0.25) for f in before)
    verdict(8, after >= 1 - TOL and mixed <= 1e-12 and spread <= 1e-12,
            f"with transcript min fidelity {after:.12f}; withheld: distance to I/4 {mixed:.2e}, "
            f"max |F - 0.25| {spread:.2e}")


def test_criterion_09_detection(verdict):
    spec = adv.AttackSpec((1, 2), fake_mixed=True)
    cfg = pe.ProtocolConfig(3)
    trials = 2000
    lines, ok = [], True
    for t in (5, 10, 20):
        rng = qc.make_rng(900 + t)
        hits = sum(adv.detect(cfg, t, rng, attacks=[spec], stop_on_mismatch=True).verdict == adv.CHEATING
                   for _ in range(trials))
        p = adv.analytic_detection_probability(0.25, t)
        sigma = np.sqrt(p * (1 - p) / trials)
        rate = hits / trials
        good = abs(rate - p) <= 3 * sigma
        ok &= good
        lines.append(f"t={t}: rate {rate:.4f} vs {p:.8f} (3 sigma {3 * sigma:.2e})")
    verdict(9, ok, "; ".join(lines))


def test_criterion_10_entangled_payload(verdict):
    worst = min(pe.run_full(pe.ProtocolConfig(5, seed=s, payload=pe.PHI00_PAYLOAD)).fidelity for s in range(20))
    verdict(10, worst >= 1 - TOL, f"phi00 over 20 seeds, min fidelity {worst:.15f}")


def test_criterion_11_driver_equivalence(verdict):
    rnd = random.Random(11)
    same, bits_ok = 0, 0
    for _ in range(50):
        n = rnd.randint(2, 6)
        cfg = pe.ProtocolConfig(n, seed=rnd.randrange(2**63), receiver=rnd.randint(1, n),
                                disclosure_policy=rnd.choice(pe.POLICIES),
                                payload=pe.TwoQubitState.random(qc.make_rng(rnd.randrange(2**32))))
        dist, full = netsim.run_distributed(cfg), pe.run_full(cfg)
        same += dist.transcript == full.transcript and dist.fidelity == full.fidelity
        bits = sum(len(e["bits"]) for e in dist.events if e["kind"] == "ANNOUNCE")
        bits_ok += bits == 2 * (n + 1)
    verdict(11, same == 50 and bits_ok == 50,
            f"{same}/50 identical transcripts and fidelities, {bits_ok}/50 with 2(N+1) announced bits")
