"""Command line: run a scenario, regenerate figure data, or run the checks."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .allocation import InfeasibleAllocation
from .harness.config import ConfigError, load_config
from .harness.figures import FIGURES, make_figures
from .harness.metrics import summarize
from .harness.output import EmitError, emit
from .harness.run import UnrecoverableAllocation, run_scenario

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("predbeam")


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _progress(quiet: bool):
    if quiet:
        return None

    def show(done, total):
        print(f"\rtrial {done}/{total}", end="\n" if done == total else "",
              file=sys.stderr, flush=True)
    return show


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["master_seed"] = args.seed
        if args.trials is not None:
            changes["monte_carlo"] = args.trials
        if changes:
            cfg = cfg.replace(**changes)
    except ConfigError as exc:
        _err(f"invalid configuration: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc.strerror or exc}")
        return EXIT_IO

    t0 = time.perf_counter()
    try:
        traces = run_scenario(cfg, progress=_progress(args.quiet))
    except (UnrecoverableAllocation, InfeasibleAllocation) as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    metrics = summarize(traces)
    elapsed = time.perf_counter() - t0
    try:
        paths = emit(traces, metrics, cfg, args.out, trials=cfg.monte_carlo,
                     extra={"runtime_s": elapsed})
    except EmitError as exc:
        _err(str(exc))
        return EXIT_IO
    if not args.quiet:
        print(json.dumps(metrics.scalars, indent=2))
        print(f"wrote {', '.join(str(p) for p in paths.values())} in {elapsed:.1f}s")
    return EXIT_OK


def cmd_figures(args) -> int:
    def show(name):
        if not args.quiet:
            print(f"building {name}", file=sys.stderr, flush=True)
    try:
        paths = make_figures(args.out, args.only or FIGURES, trials=args.trials,
                             n_slots=args.slots, progress=show)
    except EmitError as exc:
        _err(str(exc))
        return EXIT_IO
    except (UnrecoverableAllocation, InfeasibleAllocation) as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    if not args.quiet:
        for p in paths:
            print(p)
    return EXIT_OK


def cmd_check(args) -> int:
    from . import checks
    selected = checks.FAST_CHECKS if args.fast else checks.ALL_CHECKS
    results = checks.run_checks(selected, report=print)
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="predbeam", description="Radar-assisted predictive beamforming simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario from a JSON configuration")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument("--trials", type=int, help="override monte_carlo")
    run.add_argument("--quiet", action="store_true", help="no progress or summary output")
    run.set_defaults(func=cmd_run)

    fig = sub.add_parser("figures", help="write the CSV behind every figure")
    fig.add_argument("--out", required=True, help="output directory")
    fig.add_argument("--only", nargs="+", choices=FIGURES, help="subset of figures")
    fig.add_argument("--trials", type=int, help="trials per scenario (default 50)")
    fig.add_argument("--slots", type=int, help="epochs per trial (default per scenario)")
    fig.add_argument("--quiet", action="store_true")
    fig.set_defaults(func=cmd_figures)

    chk = sub.add_parser("check", help="run the acceptance checks")
    chk.add_argument("--fast", action="store_true", help="skip the Monte-Carlo scenario checks")
    chk.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.ERROR if quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
