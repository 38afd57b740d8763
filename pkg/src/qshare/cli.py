"""Command-line entry point.

Exit codes: 0 success, 1 protocol or verification failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Any, Sequence

from . import adversary as adv
from . import netsim
from . import protocol_engine as pe
from . import quantum_core as qc
from . import resource_audit as ra
from .errors import ConfigurationError, QShareError

log = logging.getLogger("qshare")

SCHEMA_VERSION = 1
EXACT_EXIT_TOL = 1e-8
MAX_ENUMERATE_PARTIES = 4
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ConfigurationError):
    pass


# ---- input parsing ----------------------------------------------------------------------------


def parse_complex_list(text: str) -> list[complex]:
    """``"1,0,0.5+0.5j,0"`` -> four complex numbers."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 4:
        raise UsageError(f"--state needs 4 comma-separated coefficients, got {len(parts)}")
    try:
        return [complex(p.replace(" ", "")) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad complex literal in --state: {exc}") from None


def parse_positions(text: str) -> tuple[int, int]:
    try:
        a, b = (int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--positions needs two comma-separated integers, got {text!r}") from None
    return a, b


def default_seed() -> int:
    raw = os.environ.get("QSHARE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"QSHARE_SEED must be an integer, got {raw!r}") from None


_SCENARIO_FIELDS = {"parties", "seed", "receiver", "payload", "policy", "attack", "forced_outcomes"}
_ATTACK_FIELDS = {"positions", "kind", "fake_mixed", "fake_state"}


@dataclass(frozen=True)
class ScenarioFile:
    parties: int
    seed: int = 0
    receiver: int | None = None
    payload: tuple[complex, ...] | None = None
    policy: str = "deferred"
    attack: adv.AttackSpec | None = None
    forced_outcomes: tuple[qc.BellLabel, ...] | None = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioFile":
        if not isinstance(d, dict):
            raise UsageError("scenario must be a JSON object")
        unknown = set(d) - _SCENARIO_FIELDS
        if unknown:
            raise UsageError(f"unknown scenario fields: {sorted(unknown)}")
        if "parties" not in d:
            raise UsageError("scenario needs 'parties'")
        payload = None
        if d.get("payload") is not None:
            pairs = d["payload"]
            if len(pairs) != 4 or any(len(p) != 2 for p in pairs):
                raise UsageError("payload must be 4 [re, im] pairs")
            payload = tuple(complex(re, im) for re, im in pairs)
        attack = None
        if d.get("attack") is not None:
            a = d["attack"]
            bad = set(a) - _ATTACK_FIELDS
            if bad:
                raise UsageError(f"unknown attack fields: {sorted(bad)}")
            fake = a.get("fake_state")
            attack = adv.AttackSpec(
                positions=tuple(a["positions"]),
                kind=a.get("kind", "collusion_with_fake"),
                fake_state=None if fake is None else pe.TwoQubitState.from_flat(
                    [complex(re, im) for re, im in fake]),
                fake_mixed=bool(a.get("fake_mixed", False)),
            )
        forced = d.get("forced_outcomes")
        return cls(
            parties=int(d["parties"]),
            seed=int(d.get("seed", 0)),
            receiver=None if d.get("receiver") is None else int(d["receiver"]),
            payload=payload,
            policy=d.get("policy", "deferred"),
            attack=attack,
            forced_outcomes=None if forced is None else tuple(qc.BellLabel.of(o) for o in forced),
        )

    @classmethod
    def load(cls, path: str) -> "ScenarioFile":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read scenario {path}: {exc}") from None

    def config(self, normalize: bool = False) -> pe.ProtocolConfig:
        payload = pe.PHI00_PAYLOAD if self.payload is None else pe.TwoQubitState.from_flat(
            self.payload, normalize=normalize)
        return pe.ProtocolConfig(
            n_parties=self.parties, seed=self.seed, receiver=self.receiver, payload=payload,
            disclosure_policy=self.policy, forced_outcomes=self.forced_outcomes,
        )


def _scenario_from_args(args) -> ScenarioFile:
    base = ScenarioFile.load(args.scenario) if args.scenario else None
    parties = args.parties if args.parties is not None else (base.parties if base else None)
    if parties is None:
        raise UsageError("--parties is required")
    seed = args.seed if args.seed is not None else (base.seed if base else default_seed())
    payload = base.payload if base else None
    if getattr(args, "state", None):
        payload = tuple(parse_complex_list(args.state))
    return ScenarioFile(
        parties=parties,
        seed=seed,
        receiver=args.receiver if getattr(args, "receiver", None) is not None else (base.receiver if base else None),
        payload=payload,
        policy=getattr(args, "policy", None) or (base.policy if base else "deferred"),
        attack=base.attack if base else None,
        forced_outcomes=base.forced_outcomes if base else None,
    )


# ---- output -----------------------------------------------------------------------------------


def report_json(report: pe.RunReport) -> dict[str, Any]:
    out = {"schema": SCHEMA_VERSION}
    out.update(report.to_dict())
    out["ledger"] = ra.audit(report).to_dict()
    return out


def report_from_json(data: dict[str, Any] | str) -> pe.RunReport:
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported report schema {data.get('schema')!r}")
    return pe.RunReport.from_dict(data)


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False)


def _transcript_rows(report: pe.RunReport) -> list[dict[str, Any]]:
    return [
        {"seq": r.sequence_number, "actor": r.actor, "kind": r.kind,
         "mu": r.outcome.mu, "nu": r.outcome.nu, "announced": int(r.announced)}
        for r in report.transcript
    ]


def format_run(report: pe.RunReport, fmt: str) -> str:
    if fmt == "json":
        return dumps(report_json(report))
    rows = _transcript_rows(report)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue().rstrip("\n")
    ledger = ra.audit(report)
    lines = [
        f"parties   {report.n_parties}",
        f"receiver  {report.receiver}",
        f"policy    {report.policy}",
        f"fidelity  {report.fidelity:.12f}",
        "",
        "seq  actor  kind  outcome",
    ]
    lines += [f"{r['seq']:>3}  {r['actor']:<5}  {r['kind']:<4}  ({r['mu']},{r['nu']})" for r in rows]
    lines += [
        "",
        f"bell pairs {ledger.bell_pairs}  ghz {ledger.ghz_measurements}  "
        f"alice bits {ledger.alice_bits}  controller bits {ledger.controller_bits}",
    ]
    return "\n".join(lines)


def _kv_table(d: dict[str, Any]) -> str:
    width = max(len(k) for k in d)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in d.items())


# ---- commands ---------------------------------------------------------------------------------


def cmd_run(args) -> int:
    scenario = _scenario_from_args(args)
    config = scenario.config(normalize=args.normalize)
    if scenario.attack is not None:
        report = adv.run_collusion(config, scenario.attack, test_rounds=args.rounds or 0)
        out = {"schema": SCHEMA_VERSION, "attack": report.to_dict()}
        if report.run is not None:
            out.update(report_json(report.run))
        print(dumps(out) if args.format == "json" else _kv_table(report.to_dict()))
        return EXIT_OK if report.receiver_fidelity >= 1 - EXACT_EXIT_TOL else EXIT_FAIL
    driver = netsim.run_distributed if args.distributed else pe.run_full
    log.info("running %s with %d parties, seed %d", driver.__name__, config.n_parties, config.seed)
    report = driver(config)
    print(format_run(report, args.format))
    return EXIT_OK if report.fidelity >= 1 - EXACT_EXIT_TOL else EXIT_FAIL


def cmd_enumerate(args) -> int:
    if args.parties > MAX_ENUMERATE_PARTIES:
        raise UsageError(f"enumerate supports at most {MAX_ENUMERATE_PARTIES} parties "
                         f"({4 ** (args.parties + 1)} branches requested)")
    scenario = _scenario_from_args(args)
    config = scenario.config(normalize=args.normalize)
    count, min_fid, total, agree = 0, 1.0, 0.0, 0
    for b in pe.enumerate_branches(config):
        count += 1
        min_fid = min(min_fid, b.fidelity)
        total += b.probability
        agree += b.correction in b.optimal
    summary = {"schema": SCHEMA_VERSION, "parties": config.n_parties, "branches": count,
               "min_fidelity": min_fid, "probability_sum": total, "oracle_agreement": agree}
    if args.format == "json":
        print(dumps(summary))
    else:
        print(_kv_table({k: v for k, v in summary.items() if k != "schema"}))
    ok = min_fid >= 1 - EXACT_EXIT_TOL and abs(total - 1) <= 1e-9 and agree == count
    return EXIT_OK if ok else EXIT_FAIL


def cmd_attack(args) -> int:
    scenario = _scenario_from_args(args)
    config = scenario.config(normalize=args.normalize)
    spec = adv.AttackSpec(parse_positions(args.positions), fake_mixed=args.mixed)
    rng = qc.make_rng(config.seed ^ 0x5EED)
    report = adv.run_collusion(config, spec, test_rounds=args.rounds, rng=rng)
    out = report.to_dict()
    out["analytic_detection_probability"] = adv.analytic_detection_probability(0.25, args.rounds)
    if args.format == "json":
        print(dumps({"schema": SCHEMA_VERSION, **out}))
    else:
        flat = {k: v for k, v in out.items() if k != "detection_stats"}
        stats = out["detection_stats"]
        if stats:
            flat["verdict"] = stats["verdict"]
            flat["test_rounds"] = len(stats["rounds"])
            flat["mismatches"] = sum(not r["passed"] for r in stats["rounds"])
        print(_kv_table(flat))
    return EXIT_OK


def cmd_resources(args) -> int:
    if args.max is not None:
        ns = range(2, args.max + 1)
    elif args.parties is not None:
        ns = [args.parties]
    else:
        raise UsageError("resources needs --parties or --max")
    rows = ra.comparison_rows(ns)
    if args.format == "json":
        print(dumps({"schema": SCHEMA_VERSION, "rows": rows}))
    elif args.format == "csv":
        print(ra.format_csv(rows), end="")
    else:
        print(ra.format_table(rows))
    return EXIT_OK


# ---- parser -----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qshare", description="Two-qubit state sharing over Bell pairs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=("table", "json", "csv")):
        p.add_argument("--parties", type=int)
        p.add_argument("--seed", type=int, help="default: $QSHARE_SEED or 0")
        p.add_argument("--state", help="payload K00,K01,K10,K11 as re+imj literals")
        p.add_argument("--normalize", action="store_true", help="normalize --state")
        p.add_argument("--scenario", help="JSON scenario file")
        p.add_argument("--format", choices=formats, default="table")

    run = sub.add_parser("run", help="run one sharing session")
    common(run)
    run.add_argument("--receiver", type=int)
    run.add_argument("--policy", choices=pe.POLICIES)
    run.add_argument("--distributed", action="store_true", help="drive through the message bus")
    run.add_argument("--rounds", type=int, default=0, help="test rounds for scenario attacks")
    run.set_defaults(func=cmd_run)

    en = sub.add_parser("enumerate", help="check every measurement branch")
    common(en, ("table", "json"))
    en.set_defaults(func=cmd_enumerate)

    at = sub.add_parser("attack", help="adjacent collusion with fake injection")
    common(at, ("table", "json"))
    at.add_argument("--positions", required=True, help="two adjacent member indices, e.g. 2,3")
    at.add_argument("--rounds", type=int, default=10, help="detection test rounds")
    at.add_argument("--mixed", action="store_true", help="inject a maximally mixed fake")
    at.set_defaults(func=cmd_attack)

    res = sub.add_parser("resources", help="compare resource counts with the GHZ scheme")
    res.add_argument("--parties", type=int)
    res.add_argument("--max", type=int)
    res.add_argument("--format", choices=("table", "json", "csv"), default="table")
    res.set_defaults(func=cmd_resources)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if getattr(args, "parties", None) is not None and args.parties < 2:
        print("error: parties must be ≥ 2", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QShareError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
