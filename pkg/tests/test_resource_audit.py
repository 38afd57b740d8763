import csv
import io

import pytest

from qshare import protocol_engine as pe
from qshare import resource_audit as ra
from qshare.errors import ConfigurationError


@pytest.mark.parametrize("n, ours, rival", [
    (2, (3, 0, 4, 2), (4, 2, 6, 2)),
    (3, (4, 0, 4, 4), (6, 2, 8, 4)),
    (10, (11, 0, 4, 18), (20, 2, 22, 18)),
])
def test_formula_examples(n, ours, rival):
    assert ra.ledger_formula(ra.THIS_SCHEME, n).counts == ours
    assert ra.ledger_formula(ra.RIVAL_SCHEME, n).counts == rival


@pytest.mark.parametrize("n", range(2, 65))
def test_audit_matches_formula(n):
    report = pe.run_full(pe.ProtocolConfig(n, seed=n))
    assert ra.audit(report).counts == ra.ledger_formula(ra.THIS_SCHEME, n).counts
    assert ra.audit_discrepancies(report) == {}
    assert ra.audit(report).announced_bits == 2 * (n + 1)


@pytest.mark.parametrize("n", range(2, 40))
def test_rival_uses_more_pairs(n):
    ours = ra.ledger_formula(ra.THIS_SCHEME, n)
    rival = ra.ledger_formula(ra.RIVAL_SCHEME, n)
    assert rival.bell_pairs - ours.bell_pairs == n - 1
    assert rival.alice_bits - ours.alice_bits == 2 * (n - 1)
    assert rival.controller_bits == ours.controller_bits


def test_formula_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        ra.ledger_formula(ra.THIS_SCHEME, 1)
    with pytest.raises(ConfigurationError):
        ra.ledger_formula("ghz", 3)
    with pytest.raises(ConfigurationError):
        ra.ResourceLedger("x", -1, 0, 0, 0)


def test_receiver_change_counts_swaps():
    report = pe.run_full(pe.ProtocolConfig(4, seed=1, receiver=1))
    ledger = ra.audit(report)
    assert ledger.extra_swaps == 2
    assert ledger.bell_pairs == 5 and ledger.alice_bits == 4
    assert ledger.controller_bits == 2 * 3


def test_table_has_row_per_scheme():
    text = ra.format_table(ra.comparison_rows([3]))
    lines = text.splitlines()
    assert lines[0].split() == ["n", "scheme", "bell_pairs", "ghz_measurements", "alice_bits", "controller_bits"]
    assert lines[2].split() == ["3", "this_paper", "4", "0", "4", "4"]
    assert lines[3].split() == ["3", "rival", "6", "2", "8", "4"]


def test_csv_round_trip():
    rows = ra.comparison_rows(range(2, 11))
    parsed = list(csv.DictReader(io.StringIO(ra.format_csv(rows))))
    assert len(parsed) == 9
    assert [{k: int(v) for k, v in r.items()} for r in parsed] == rows


def test_discrepancy_for_extra_pair():
    report = pe.run_full(pe.ProtocolConfig(3, seed=0))
    bumped = pe.RunReport.from_dict({**report.to_dict(), "bell_pairs_prepared": 5})
    assert ra.audit_discrepancies(bumped) == {"bell_pairs": 1}
