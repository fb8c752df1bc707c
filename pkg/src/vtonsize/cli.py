"""Command-line entry point: ``vtonsize <command> [flags]``.

Exit codes: 0 success, 1 record failures under ``--strict`` (or every
record failed, or an unreadable report), 2 configuration error.
"""

import argparse
import logging
import sys

from . import __version__, pipeline
from .errors import ConfigurationError, VtonSizeError

COMMANDS = ("gen-masks", "adjust-garment", "tryon", "evaluate", "report")


def _sizes(text):
    try:
        vals = tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sizes expects levels like '1,2,3', got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("--sizes needs at least one level")
    return vals


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--manifest", help="input manifest (JSONL)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--sizes", type=_sizes, help="size levels, e.g. '1,2,3'")
    common.add_argument("--strict", action="store_true", default=None, help="exit 1 if any record fails")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--cm-per-pixel", type=float, help="override the pixel scale of every record")
    common.add_argument("--backend-url", help="try-on service URL")
    common.add_argument("--refine", choices=("classical", "external", "none"), help="mask refiner")
    common.add_argument("--report", help="report path (default <out>/report.json)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="vtonsize", description="Size-aware virtual try-on evaluation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-masks", parents=[common], help="multi-size masks M_1..M_3")
    sub.add_parser("adjust-garment", parents=[common], help="size-adjusted garment images C_1..C_3")
    sub.add_parser("tryon", parents=[common], help="generate Y_1..Y_3 via the try-on backend")
    sub.add_parser("evaluate", parents=[common], help="measure, compensate and score increments")
    sub.add_parser("report", parents=[common], help="print the error table of a report")
    return p


def main(argv=None, env=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "manifest": args.manifest,
        "out": args.out,
        "sizes": args.sizes,
        "strict": args.strict,
        "jobs": args.jobs,
        "cm_per_pixel": args.cm_per_pixel,
        "backend_url": args.backend_url,
        "refine": args.refine,
        "report": args.report,
    }
    try:
        cfg = pipeline.load_config(args.config, env=env, overrides=overrides)
        if args.command == "report":
            text, _, _ = pipeline.cmd_report(cfg)
            sys.stdout.write(text)
            return 0
        fn = {
            "gen-masks": pipeline.cmd_gen_masks,
            "adjust-garment": pipeline.cmd_adjust_garment,
            "tryon": pipeline.cmd_tryon,
            "evaluate": pipeline.cmd_evaluate,
        }[args.command]
        outcome = fn(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except VtonSizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    n, bad = len(outcome.results), len(outcome.failed)
    print(f"{args.command}: {n - bad}/{n} records ok", file=sys.stderr)
    for r in outcome.failed:
        print(f"  {r.id}: {r.error}", file=sys.stderr)
    for k in ("manifest", "report", "csv"):
        if k in outcome.outputs:
            print(f"{k}: {outcome.outputs[k]}", file=sys.stderr)
    return outcome.exit_code(cfg.strict)


if __name__ == "__main__":
    sys.exit(main())
