"""
Edge Zero Trust benchmark
- Command-line entry point
- deploy / bench / fault / report / export-chain / verify-chain / analyser
- --process runs the deployment in a separate local process
- Logging configured once here
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from utils import analytics
from utils.config import load_settings
from utils.errors import ConfigurationError, CorruptChain, ZTAError
from utils.harness import (
    TestCase,
    Variant,
    benchmark,
    benchmark_all,
    deploy,
    deployment_health,
    engine_sweep,
    fault_trial,
    run_in_process,
    run_test_case,
)
from utils.ledger import export_chain, import_chain, verify_blocks

DEFAULT_RESULTS = "results.csv"

logger = logging.getLogger("zta")


# -------------------------
# Commands
# -------------------------
def _call(args, fn, *fn_args, **fn_kwargs):
    if args.process:
        return run_in_process(fn, *fn_args, **fn_kwargs)
    return fn(*fn_args, **fn_kwargs)


def cmd_deploy(args, settings):
    health = _call(args, deployment_health, args.variant, settings)
    print(json.dumps(health, indent=2, default=str))


def cmd_bench(args, settings):
    if args.runs:
        settings = settings.with_harness(runs=args.runs)
    tcs = [TestCase(tc) for tc in args.tc] if args.tc else list(TestCase)

    if args.engines:
        reports = _call(args, engine_sweep, settings, counts=args.engines, tc=tcs[0], variant=args.variant or Variant.ZTA_BC)
    elif args.all:
        reports = _call(args, benchmark_all, settings, tcs)
    elif args.variant:
        reports = _call(args, benchmark, args.variant, tcs, settings)
    else:
        raise SystemExit("bench: pass --variant, --all or --engines")

    df = analytics.reports_to_frame(reports)
    analytics.save_results(df, args.out)
    print(analytics.summary_text(df))
    if args.all:
        for tc, same in analytics.functional_equivalence(reports).items():
            print(f"{tc}: variants {'agree' if same else 'DISAGREE'}")


def cmd_fault(args, settings):
    counts, engines = _call(args, fault_trial, args.variant, args.engine, args.requests, settings, args.compromise)
    state = "compromised" if args.compromise else "named, left honest"
    print(f"{args.variant}: {len(args.engine)}/{engines} engines {state} -> {counts}")


def cmd_report(args, settings):
    df = analytics.load_results(args.results)
    summary = analytics.summary_text(df)
    print(summary)
    out = Path(args.out)
    analytics.averages_table(df).to_csv(out.with_suffix(".csv"))
    analytics.ratios_frame(df).to_csv(out.with_suffix(".ratios.csv"), index=False)
    out.with_suffix(".txt").write_text(summary + "\n")
    if args.pdf:
        from utils.pdf_export import generate_benchmark_pdf

        with open(out.with_suffix(".pdf"), "wb") as fh:
            generate_benchmark_pdf(fh, df, summary)
    print(f"report written next to {out}")


def cmd_export_chain(args, settings):
    with deploy(args.variant, settings=settings) as deployment:
        if deployment.ledger is None:
            raise ConfigurationError(f"{args.variant} keeps no ledger")
        if args.peer not in deployment.ledger.peers:
            raise ConfigurationError(f"unknown peer {args.peer!r}")
        for tc in args.tc or ():
            run_test_case(deployment, tc, runs=1)
        deployment.quiesce()
        count = export_chain(deployment.ledger.peers[args.peer].blocks(), args.out)
    print(f"{count} blocks from {args.peer} written to {args.out}")


def cmd_verify_chain(args, settings):
    try:
        blocks = import_chain(args.chain)
    except CorruptChain as e:
        print(f"chain broken at block {e.index} ({e.reason})")
        return 1
    result = verify_blocks(blocks, settings.ledger.digest)
    if result:
        print(f"chain OK ({len(blocks)} blocks)")
        return 0
    print(f"chain broken at block {result.first_bad_index}")
    return 1


def cmd_analyser(args, settings):
    with deploy(args.variant, settings=settings) as deployment:
        analyser = deployment.analyser()
        if args.query == "engines":
            data = analyser.connected_engines()
        else:
            data = analyser.actor_history(args.actor, args.limit)
    print(json.dumps(data, indent=2, default=str))


# -------------------------
# Parser
# -------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zta", description="Edge Zero Trust deployment and benchmark")
    parser.add_argument("--config", help="settings file (defaults to $ZTA_CONFIG or config/zta.json)")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    variants = [v.value for v in Variant]
    tcs = [t.value for t in TestCase]

    p = sub.add_parser("deploy", help="start a variant and print its health")
    p.add_argument("--variant", choices=variants, default=Variant.ZTA_BC.value)
    p.add_argument("--process", action="store_true", help="deploy in a separate local process")
    p.set_defaults(func=cmd_deploy)

    p = sub.add_parser("bench", help="run test cases")
    p.add_argument("--variant", choices=variants)
    p.add_argument("--tc", choices=tcs, action="append")
    p.add_argument("--runs", type=int)
    p.add_argument("--all", action="store_true", help="all five variants")
    p.add_argument("--engines", type=int, nargs="+", help="engine-count sweep")
    p.add_argument("--out", default=DEFAULT_RESULTS, help="CSV of run times")
    p.add_argument("--process", action="store_true", help="deploy in a separate local process")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fault", help="compromise engines and count decided outcomes")
    p.add_argument("--variant", choices=variants, default=Variant.ZTA_BC.value)
    p.add_argument("--engine", action="append", required=True)
    p.add_argument("--compromise", action="store_true", help="invert the named engines (otherwise a baseline run)")
    p.add_argument("--requests", type=int, default=100)
    p.add_argument("--process", action="store_true", help="deploy in a separate local process")
    p.set_defaults(func=cmd_fault)

    p = sub.add_parser("report", help="summarize a results CSV")
    p.add_argument("--out", required=True, help="path stem for the .csv, .ratios.csv, .txt and .pdf outputs")
    p.add_argument("--results", default=DEFAULT_RESULTS)
    p.add_argument("--pdf", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-chain", help="write a peer's chain as JSON lines")
    p.add_argument("out")
    p.add_argument("--variant", choices=[Variant.ZTA_BC.value, Variant.ZTA_BC_X4.value], default=Variant.ZTA_BC.value)
    p.add_argument("--peer", default="peer1")
    p.add_argument("--tc", choices=tcs, action="append", help="test cases to run first")
    p.set_defaults(func=cmd_export_chain)

    p = sub.add_parser("verify-chain", help="audit an exported chain")
    p.add_argument("chain")
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("analyser", help="maintenance queries")
    p.add_argument("query", choices=["engines", "history"])
    p.add_argument("--variant", choices=variants, default=Variant.ZTA_BC.value)
    p.add_argument("--actor", default="admin")
    p.add_argument("--limit", type=int, default=10)
    p.set_defaults(func=cmd_analyser)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = load_settings(args.config)
        return args.func(args, settings) or 0
    except (ZTAError, OSError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return 2


if __name__ == "__main__":
    sys.exit(main())
