"""Resource counts for this scheme and for the GHZ-measurement scheme.

The GHZ scheme is never simulated; its counts are formula only.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

from .errors import ConfigurationError
from .pauli_frame import ALICE
from .protocol_engine import RunReport

THIS_SCHEME = "this_paper"
RIVAL_SCHEME = "rival"
SCHEMES = (THIS_SCHEME, RIVAL_SCHEME)


@dataclass(frozen=True)
class ResourceLedger:
    scheme: str
    bell_pairs: int
    ghz_measurements: int
    alice_bits: int
    controller_bits: int
    extra_swaps: int = 0

    def __post_init__(self):
        for f in ("bell_pairs", "ghz_measurements", "alice_bits", "controller_bits", "extra_swaps"):
            if getattr(self, f) < 0:
                raise ConfigurationError(f"{f} must be nonnegative")

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.bell_pairs, self.ghz_measurements, self.alice_bits, self.controller_bits)

    @property
    def announced_bits(self) -> int:
        return self.alice_bits + self.controller_bits

    def to_dict(self) -> dict:
        return asdict(self)


def ledger_formula(scheme: str, n: int) -> ResourceLedger:
    if n < 2:
        raise ConfigurationError("parties must be ≥ 2")
    if scheme == THIS_SCHEME:
        return ResourceLedger(scheme, n + 1, 0, 4, 2 * (n - 1))
    if scheme == RIVAL_SCHEME:
        return ResourceLedger(scheme, 2 * n, 2, 2 * (n + 1), 2 * (n - 1))
    raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def audit(report: RunReport) -> ResourceLedger:
    """Usage actually incurred by a run, counted from its report."""
    announced = [r for r in report.transcript if r.announced]
    return ResourceLedger(
        scheme=THIS_SCHEME,
        bell_pairs=report.bell_pairs_prepared,
        ghz_measurements=report.ghz_measurements,
        alice_bits=2 * sum(1 for r in announced if r.actor == ALICE),
        controller_bits=2 * sum(1 for r in announced if r.actor != ALICE),
        extra_swaps=report.extra_swaps,
    )


def audit_discrepancies(report: RunReport) -> dict[str, int]:
    """``field -> measured - expected`` for every field that differs from the formula."""
    measured = audit(report)
    expected = ledger_formula(THIS_SCHEME, report.n_parties)
    out = {}
    for f in _COUNT_FIELDS:
        diff = getattr(measured, f) - getattr(expected, f)
        if diff:
            out[f] = diff
    return out


_COUNT_FIELDS = ("bell_pairs", "ghz_measurements", "alice_bits", "controller_bits")
_COLUMNS = ("n",) + tuple(f"{scheme}_{f}" for scheme in SCHEMES for f in _COUNT_FIELDS)


def comparison_rows(ns) -> list[dict]:
    """One row per member count with both schemes side by side."""
    rows = []
    for n in ns:
        row = {"n": n}
        for scheme in SCHEMES:
            led = ledger_formula(scheme, n)
            row.update({f"{scheme}_{f}": getattr(led, f) for f in _COUNT_FIELDS})
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned text, one line per member count and scheme."""
    header = ["n", "scheme", *_COUNT_FIELDS]
    cells = [header]
    for r in rows:
        for scheme in SCHEMES:
            cells.append([str(r["n"]), scheme] + [str(r[f"{scheme}_{f}"]) for f in _COUNT_FIELDS])
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    just = [str.rjust, str.ljust] + [str.rjust] * len(_COUNT_FIELDS)
    lines = ["  ".join(j(c, w) for j, c, w in zip(just, row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(_COLUMNS), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


