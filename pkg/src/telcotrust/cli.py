"""Command-line entry point.

Exit codes are shared by every subcommand: 0 success, 1 domain failure
(violations, non-Trusted decisions, unknown names), 2 I/O or format failure.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
from pathlib import Path
from typing import Any

from .core import Decision
from .errors import ConfigurationError, ContractError, InsufficientMeasurements, NotFoundError
from .pipeline import DEFAULT_SEED
from .scenarios import (
    BUILDERS,
    Fault,
    FaultKind,
    Scenario,
    build_scenario,
    inject_fault,
    render_table,
    run_scenario,
    scenario_from_topology,
)
from .topology import SystemGraph, export_vocabulary, load_perspectives, validate_schema
from .verification import ReferenceValueStore, VerificationPolicy, minimal_sufficient_sets

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
SEED_ENV = "ATTEST_SEED"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def resolve_seed(args: argparse.Namespace) -> int:
    if args.entropy:
        return secrets.randbits(64)
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise CliError(f"{SEED_ENV} must be an integer, got {env!r}", EXIT_IO) from None
    return DEFAULT_SEED


def read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CliError(f"{path} is not valid JSON: {exc}", EXIT_IO) from None


def _parse(path: str, loader):
    data = read_json(path)
    try:
        return data, loader(data)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(f"{path} has an unexpected shape: {exc!r}", EXIT_IO) from None


def load_graph(path: str) -> tuple[dict, SystemGraph]:
    return _parse(path, SystemGraph.from_dict)


def load_stores(path: str, perspectives) -> dict[str, ReferenceValueStore]:
    """A single store shared by every perspective, or ``{"perspectives": {name: store}}``."""
    def loader(data):
        if "perspectives" in data:
            return {k: ReferenceValueStore.from_dict(v) for k, v in data["perspectives"].items()}
        store = ReferenceValueStore.from_dict(data)
        return {p: store.copy() for p in perspectives}
    return _parse(path, loader)[1]


def load_policy(path: str) -> VerificationPolicy:
    return _parse(path, VerificationPolicy.from_dict)[1]


def emit(args: argparse.Namespace, text: str) -> None:
    if args.output is None:
        sys.stdout.write(text)
        return
    out = Path(args.output)
    if out.exists() and not args.force:
        raise CliError(f"{out} exists; pass --force to overwrite", EXIT_IO)
    try:
        out.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc.strerror or exc}", EXIT_IO) from None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands ------------------------------------------------------------------

def cmd_validate(args) -> int:
    _, graph = load_graph(args.topology)
    violations = validate_schema(graph)
    if args.format == "json":
        emit(args, _dump({"topology": args.topology, "violations": violations}))
    else:
        emit(args, "".join(v + "\n" for v in violations) or "ok\n")
    return EXIT_DOMAIN if violations else EXIT_OK


def _topology_scenario(args) -> Scenario:
    data, graph = load_graph(args.topology)
    violations = validate_schema(graph)
    if violations:
        raise CliError("invalid topology:\n" + "\n".join(violations), EXIT_DOMAIN)
    try:
        perspectives = load_perspectives(data, graph)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad perspectives in {args.topology}: {exc!r}", EXIT_IO) from None
    policy = load_policy(args.policy) if getattr(args, "policy", None) else None
    return scenario_from_topology(graph, perspectives, policy, seed=resolve_seed(args))


def cmd_enroll(args) -> int:
    s = _topology_scenario(args)
    s.enroll_all()
    emit(args, _dump({"perspectives": {k: v.to_dict() for k, v in sorted(s.stores.items())}}))
    return EXIT_OK


def cmd_attest(args) -> int:
    s = _topology_scenario(args)
    if args.perspective not in s.perspectives:
        raise CliError(
            f"unknown perspective {args.perspective!r}; choose from: " + ", ".join(sorted(s.perspectives)),
            EXIT_DOMAIN,
        )
    s.perspectives = {args.perspective: s.perspectives[args.perspective]}
    s.policies = {args.perspective: s.policies[args.perspective]}
    stores = load_stores(args.references, s.perspectives)
    s.stores = {args.perspective: stores.get(args.perspective, ReferenceValueStore())}
    report = run_scenario(s, log_path=args.log)
    p = args.perspective
    rows = {node: cells[p] for node, cells in report.decisions.items()}
    if args.format == "json":
        emit(args, _dump({
            "perspective": p,
            "seed": report.seed,
            "decisions": rows,
            "checks": report.checks.get(p, {}),
            "claims_log": report.claims_log,
        }))
    else:
        table = [["node", "base", "composite"]]
        table += [[n, rows[n]["base"], rows[n]["composite"]] for n in sorted(rows)]
        emit(args, render_table(table))
    trusted = all(r["composite"] == Decision.TRUSTED.value for r in rows.values())
    return EXIT_OK if trusted else EXIT_DOMAIN


def _scenario_catalog() -> str:
    return "valid scenarios:\n" + "".join(f"  {n}\n" for n in BUILDERS)


def _fault_catalog() -> str:
    return "valid faults (KIND:TARGET):\n" + "".join(f"  {k.value}\n" for k in FaultKind)


def cmd_scenario(args) -> int:
    seed = resolve_seed(args)
    if args.from_file:
        s = _parse(args.from_file, Scenario.from_dict)[1]
        if args.seed is not None or args.entropy:
            s.seed = seed
    elif args.name in BUILDERS:
        s = build_scenario(args.name, seed)
    else:
        raise CliError(f"unknown scenario {args.name!r}\n" + _scenario_catalog(), EXIT_DOMAIN)
    for text in args.fault:
        try:
            fault = Fault.parse(text)
        except ValueError as exc:
            raise CliError(f"{exc}\n" + _fault_catalog(), EXIT_DOMAIN) from None
        try:
            s = inject_fault(s, fault)
        except (NotFoundError, ContractError) as exc:
            raise CliError(str(exc), EXIT_DOMAIN) from None
    if args.export_definition:
        emit(args, _dump(s.to_dict()))
        return EXIT_OK
    report = run_scenario(s, log_path=args.log)
    if args.format == "json":
        emit(args, report.to_json())
    else:
        answers = "".join(
            f"[{q['id']}] {q['question']}: {json.dumps(q['answer'], sort_keys=True)}\n" for q in report.questions
        )
        emit(args, report.to_table() + ("\n" + answers if answers else ""))
    return EXIT_OK if report.all_trusted() else EXIT_DOMAIN


def cmd_minset(args) -> int:
    policy = load_policy(args.policy)
    data = read_json(args.references)
    try:
        if "perspectives" in data:
            stores = {k: ReferenceValueStore.from_dict(v) for k, v in sorted(data["perspectives"].items())}
        else:
            stores = {"": ReferenceValueStore.from_dict(data)}
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(f"{args.references} has an unexpected shape: {exc!r}", EXIT_IO) from None
    if args.perspective is not None:
        if args.perspective not in stores:
            raise CliError(f"unknown perspective {args.perspective!r}", EXIT_DOMAIN)
        stores = {args.perspective: stores[args.perspective]}
    record = next((st.get(args.element) for st in stores.values() if st.get(args.element)), None)
    if record is None:
        raise CliError(f"no reference record for element {args.element!r}", EXIT_DOMAIN)
    coverage = policy.measurement_coverage.get(record.kind)
    if coverage is None:
        raise CliError(f"policy has no coverage for kind {record.kind!r}", EXIT_DOMAIN)
    try:
        sets = minimal_sufficient_sets(record.measurements, coverage)
    except InsufficientMeasurements as exc:
        raise CliError(str(exc), EXIT_DOMAIN) from None
    except ContractError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    if args.format == "json":
        emit(args, _dump({"element": args.element, "sets": [sorted(s) for s in sets]}))
    else:
        emit(args, "".join(",".join(sorted(s)) + "\n" for s in sets))
    return EXIT_OK


def cmd_vocab(args) -> int:
    _, graph = load_graph(args.topology)
    emit(args, _dump(export_vocabulary(graph)))
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    seed = common.add_mutually_exclusive_group()
    seed.add_argument("--seed", type=lambda s: int(s, 0), default=None,
                      help=f"64-bit seed (default: ${SEED_ENV} or a fixed constant)")
    seed.add_argument("--entropy", action="store_true", help="draw a fresh seed from the OS")
    common.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")
    common.add_argument("--force", action="store_true", help="allow overwriting --output")
    common.add_argument("--format", choices=("table", "json"), default="table")
    common.add_argument("--log", default=None, help="append claims-log JSON lines to this path")

    parser = argparse.ArgumentParser(prog="telcotrust", description="Trust decisions for telecom deployments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check a topology against the schema rules")
    p.add_argument("topology")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("enroll", parents=[common], help="record golden references for a healthy topology")
    p.add_argument("topology")
    p.add_argument("--policy", default=None)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("attest", parents=[common], help="attest every element of a topology")
    p.add_argument("topology")
    p.add_argument("references")
    p.add_argument("policy")
    p.add_argument("--perspective", required=True)
    p.set_defaults(func=cmd_attest)

    p = sub.add_parser("scenario", parents=[common], help="run a named scenario with optional faults")
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--fault", action="append", default=[], metavar="KIND:TARGET")
    p.add_argument("--from-file", default=None, help="scenario definition JSON instead of a name")
    p.add_argument("--export-definition", action="store_true", help="print the scenario definition and stop")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("minset", parents=[common], help="minimal sufficient measurement sets for an element")
    p.add_argument("references")
    p.add_argument("policy")
    p.add_argument("element")
    p.add_argument("--perspective", default=None)
    p.set_defaults(func=cmd_minset)

    p = sub.add_parser("vocab", parents=[common], help="export the topology as a vocabulary document")
    p.add_argument("topology")
    p.set_defaults(func=cmd_vocab)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario" and args.name is None and args.from_file is None:
        print("scenario needs a name or --from-file\n" + _scenario_catalog(), file=sys.stderr, end="")
        return EXIT_DOMAIN
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
