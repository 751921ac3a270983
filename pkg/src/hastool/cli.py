"""Command-line driver: one subcommand per pass, all thin bindings.

Exit status: 0 success, 1 validation failure, 2 infeasible or cyclic input,
3 I/O or URI error, 4 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from decimal import Decimal
from pathlib import Path
from typing import Any, Sequence

from . import __version__, documents
from .apm import validate_apm, validate_catalog
from .aspm import validate_aspm
from .deploy import write_bundle
from .errors import HasError, ModelError, RepoError
from .lower import LoweringPolicy, lower, schedule_violations
from .psm import validate_psm
from .repo import Repository, default_root, run_job
from .sim import SimConfig, compare_scenarios, format_comparison, format_report, simulate
from .validation import Collector, ValidationReport
from .xform import count_sequences, enumerate_sequences, generate_pi_apm, import_bom

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3
EXIT_USAGE = 4

log = logging.getLogger("hastool")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(model: Any, output: str | None) -> None:
    if output:
        documents.save(model, output)
    else:
        sys.stdout.write(documents.dumps(model))


def _print_json(obj: Any) -> None:
    sys.stdout.write(documents.canonical_json(obj))


def cmd_validate(args: argparse.Namespace) -> int:
    model = documents.load(args.file)
    kind = documents.kind_of(model)
    if kind == "psm":
        report = validate_psm(model)
    elif kind == "aspm":
        report = validate_aspm(model)
    elif kind == "catalog":
        report = validate_catalog(model)
    elif kind in ("apm-pi", "apm-ps"):
        if not (args.psm and args.catalog):
            raise UsageError("validating a process model needs --psm and --catalog")
        catalog = documents.load(args.catalog, "catalog")
        out = Collector()
        out.extend(validate_apm(model, documents.load(args.psm, "psm"), catalog))
        if kind == "apm-ps" and args.platform:
            out.extend(schedule_violations(model, documents.load(args.platform, "aspm"), catalog))
        report = out.report()
    elif kind == "bom":
        out = Collector()
        try:
            import_bom(model)
        except HasError as exc:
            out.error(exc.code, model.id, exc.message)
        report = out.report()
    else:
        report = ValidationReport()
    _print_json(report.to_dict(kind))
    return EXIT_OK if report.conformant else EXIT_VALIDATION


def cmd_import_bom(args: argparse.Namespace) -> int:
    bom = documents.load(args.bom, "bom")
    liaisons = documents.load(args.liaisons, "liaisons").connectors if args.liaisons else None
    result = import_bom(bom, liaisons)
    for warning in result.warnings:
        print(f"warning: {warning.rule}: {warning.message}", file=sys.stderr)
    _emit(result.model, args.output)
    return EXIT_OK


def _pairs(values: Sequence[str], flag: str) -> dict[str, str]:
    out = {}
    for value in values:
        key, sep, target = value.partition("=")
        if not sep or not key or not target:
            raise UsageError(f"{flag} expects CONNECTOR=ACTION, got {value!r}")
        out[key] = target
    return out


def cmd_gen_pi(args: argparse.Namespace) -> int:
    psm = documents.load(args.psm, "psm")
    catalog = documents.load(args.catalog, "catalog")
    extra = documents.load(args.constraints, "constraints") if args.constraints else None
    model = generate_pi_apm(psm, extra, catalog, joins=_pairs(args.join, "--join"), apm_id=args.id)
    _emit(model, args.output)
    return EXIT_OK


def cmd_enumerate(args: argparse.Namespace) -> int:
    apm = documents.load(args.apm, ("apm-pi", "apm-ps"))
    if args.count_only:
        print(count_sequences(apm, args.level))
    else:
        _print_json(enumerate_sequences(apm, args.level, args.limit).to_dict())
    return EXIT_OK


def cmd_lower(args: argparse.Namespace) -> int:
    apm = documents.load(args.apm, "apm-pi")
    platform = documents.load(args.platform, "aspm")
    catalog = documents.load(args.catalog, "catalog")
    _emit(lower(apm, platform, catalog, LoweringPolicy(args.policy), ps_id=args.id), args.output)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    ps_apm = documents.load(args.apm_ps, "apm-ps")
    platform = documents.load(args.platform, "aspm")
    report = simulate(ps_apm, platform, SimConfig(args.quantity, args.release))
    if args.report:
        documents.save(report, args.report)
    if args.table:
        sys.stdout.write(format_report(report))
    elif not args.report:
        sys.stdout.write(documents.dumps(report))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    reports = [(path, documents.load(path, "sim-report")) for path in args.reports]
    ranking = compare_scenarios(reports)
    if args.json:
        _print_json(
            [
                {
                    "rank": r.rank,
                    "label": r.label,
                    "total_makespan": str(r.report.total_makespan),
                    "mean_utilization": str(r.report.mean_utilization),
                }
                for r in ranking
            ]
        )
    else:
        sys.stdout.write(format_comparison(ranking))
    return EXIT_OK


def cmd_deploy(args: argparse.Namespace) -> int:
    ps_apm = documents.load(args.apm_ps, "apm-ps")
    platform = documents.load(args.platform, "aspm")
    catalog = documents.load(args.catalog, "catalog")
    print(write_bundle(ps_apm, platform, catalog, args.output))
    return EXIT_OK


def _repo(args: argparse.Namespace) -> Repository:
    return Repository(args.repo or default_root(), args.repo_name)


def cmd_repo(args: argparse.Namespace) -> int:
    repo = _repo(args)
    if args.repo_command == "store":
        print(repo.store(_read_bytes(args.file), name=args.name))
    elif args.repo_command == "resolve":
        sys.stdout.buffer.write(repo.resolve(args.uri))
        sys.stdout.flush()
    else:
        for entry in repo.entries(args.kind):
            print(f"{entry.uri}  {entry.digest}  {entry.stored_at}")
    return EXIT_OK


def cmd_job(args: argparse.Namespace) -> int:
    repo = _repo(args)
    if args.job_command == "add":
        data = _read_bytes(args.file)
        if documents.kind_of(documents.parse(data)) != "job":
            raise ModelError("FORMAT", f"{args.file} is not a job document")
        print(repo.store(data))
        return EXIT_OK
    job = repo.load(args.uri, "job")
    ps_uri, report_uri = run_job(repo, job, args.platform, LoweringPolicy(args.policy))
    _print_json({"apm_ps": str(ps_uri), "report": str(report_uri)})
    return EXIT_OK


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise RepoError("IO", f"cannot read {path}: {exc.strerror}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hastool", description="Model-driven assembly process toolchain.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--repo", help="repository root (default: $HAS_REPO or .hasrepo)")
    parser.add_argument("--repo-name", default="main", help="repository name used in URIs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a model document against its meta-model")
    p.add_argument("file")
    p.add_argument("--psm")
    p.add_argument("--catalog")
    p.add_argument("--platform")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("import-bom", help="turn a bill of materials into a product structural model")
    p.add_argument("--bom", required=True)
    p.add_argument("--liaisons")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_import_bom)

    p = sub.add_parser("gen-pi", help="generate the platform-independent process model")
    p.add_argument("--psm", required=True)
    p.add_argument("--constraints")
    p.add_argument("--catalog", required=True)
    p.add_argument("--join", action="append", default=[], metavar="CONNECTOR=ACTION")
    p.add_argument("--id")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_pi)

    p = sub.add_parser("enumerate", help="list the assembly sequences of one level")
    p.add_argument("--apm", required=True)
    p.add_argument("--level", required=True)
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--count-only", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("lower", help="schedule a process model onto a platform")
    p.add_argument("--apm", required=True)
    p.add_argument("--platform", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--policy", choices=("list", "exact"), default="list")
    p.add_argument("--id")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("simulate", help="evaluate a platform-specific process model")
    p.add_argument("--apm-ps", required=True)
    p.add_argument("--platform", required=True)
    p.add_argument("--quantity", type=int, default=1)
    p.add_argument("--release", type=Decimal, default=Decimal(0), help="time between unit releases")
    p.add_argument("--report")
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="rank simulation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("deploy", help="write a deployment bundle")
    p.add_argument("--apm-ps", required=True)
    p.add_argument("--platform", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("repo", help="model repository")
    rsub = p.add_subparsers(dest="repo_command", required=True, parser_class=_Parser)
    q = rsub.add_parser("store")
    q.add_argument("file")
    q.add_argument("--name")
    q = rsub.add_parser("resolve")
    q.add_argument("uri")
    q = rsub.add_parser("list")
    q.add_argument("--kind")
    p.set_defaults(func=cmd_repo)

    p = sub.add_parser("job", help="assembly jobs")
    jsub = p.add_subparsers(dest="job_command", required=True, parser_class=_Parser)
    q = jsub.add_parser("add")
    q.add_argument("file")
    q = jsub.add_parser("run")
    q.add_argument("uri")
    q.add_argument("--platform", required=True)
    q.add_argument("--policy", choices=("list", "exact"), default="list")
    p.set_defaults(func=cmd_job)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hastool: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HasError as exc:
        print(f"hastool: error: {exc}", file=sys.stderr)
        report = exc.details.get("report")
        if isinstance(report, ValidationReport):
            for v in report.violations:
                print(f"  {v.rule} {v.element}: {v.message}", file=sys.stderr)
        if "gap" in exc.details:
            print("gap: " + json.dumps(exc.details["gap"]), file=sys.stderr)
        return exc.exit_status


if __name__ == "__main__":
    sys.exit(main())
