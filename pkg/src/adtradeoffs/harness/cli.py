"""``adtradeoffs`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 claim not reproduced.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path

from ..errors import AuctionError, ConfigError
from ..objectives import LOWEST_SNE_GSP, TRUTHFUL, EstimatorConfig
from ..templates import (COUNTEREXAMPLES, CONSIDERATE, INDIFFERENT, SELECTIONS, STANDARD,
                         sne_grid_search)
from .config import load_scenario
from .replay import ReplayRow, read_log, replay
from .runners import load_adcap, parse_params, run_adcap, run_counterexample
from .sweep import RULE_PARAMS, frontier_rows, parse_grid, run_sweep, write_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CLAIM = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@contextlib.contextmanager
def _output(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with p.open("w", newline="") as fh:
            yield fh


def _est(args, seed_default: int = 0) -> EstimatorConfig:
    seed = args.seed if args.seed is not None else seed_default
    return EstimatorConfig(args.samples, seed, args.batch, args.workers)


def _add_mc(p):
    p.add_argument("--samples", type=int, default=10_000, help="Monte Carlo draws per point")
    p.add_argument("--seed", type=int, default=None, help="defaults to the scenario's seed")
    p.add_argument("--batch", type=int, default=8192, help="draws per seeded batch")
    p.add_argument("--workers", type=int, default=1, help="worker threads")
    p.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="adtradeoffs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, helptext in (("sweep", "metrics over a rule-parameter grid"),
                           ("frontier", "Pareto-optimal points of a sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", required=True, help="scenario JSON or preset name")
        p.add_argument("--rule", required=True, choices=sorted(RULE_PARAMS))
        p.add_argument("--grid", action="append", help="e.g. r=0:1:11 or rho=0,0.5 (repeatable)")
        p.add_argument("--pricing", default=TRUTHFUL, choices=[TRUTHFUL, LOWEST_SNE_GSP])
        _add_mc(p)
        if name == "frontier":
            p.add_argument("--axes", default="impressions,revenue",
                           help="x,y; fewer of x and more of y is better")

    p = sub.add_parser("adcap", help="optimum under an impression cap")
    p.add_argument("--scenario", "--config", dest="scenario", required=True, help="ad-cap JSON")
    p.add_argument("--theta", type=float, default=None, help="override the cap")
    p.add_argument("--tol", type=float, default=1e-9)
    _add_mc(p)

    p = sub.add_parser("sne-search", help="grid search for a template SNE")
    p.add_argument("--scenario", required=True, help="scenario JSON with classes and templates")
    p.add_argument("--pricing", default=CONSIDERATE, choices=[CONSIDERATE, INDIFFERENT])
    p.add_argument("--selection", default=STANDARD, choices=list(SELECTIONS))
    p.add_argument("--grid", type=int, default=15, help="bid points per bidder")
    p.add_argument("--budget", type=int, default=10_000_000, help="largest profile count")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("replay", help="logged bids under another rule")
    p.add_argument("--log", required=True, help="CSV with auction_id,bidder_id,bid,weight")
    p.add_argument("--rule", required=True, choices=sorted(set(RULE_PARAMS) - {"optimal"}))
    p.add_argument("--grid", action="append")
    p.add_argument("--slots", default=None, help="comma-separated slot effects")
    p.add_argument("--scenario", default=None, help="take the slots from this scenario")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None)

    p = sub.add_parser("counterexample", help="check one of the template counterexamples")
    p.add_argument("name", choices=list(COUNTEREXAMPLES))
    p.add_argument("--param", action="append", help="name=value, e.g. m=10 (repeatable)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="write the instance as scenario JSON")
    return ap


def _cmd_sweep(args) -> int:
    cfg = load_scenario(args.scenario)
    scenario = cfg.require_market()
    rows = run_sweep(scenario, args.rule, parse_grid(args.grid), args.pricing, _est(args, cfg.seed))
    if args.command == "frontier":
        axes = tuple(a.strip() for a in args.axes.split(","))
        if len(axes) != 2 or any(a not in ("impressions", "clicks", "welfare", "revenue") for a in axes):
            raise UsageError("--axes takes two of impressions, clicks, welfare, revenue")
        rows = frontier_rows(rows, axes)
    with _output(args.out) as fh:
        write_csv(rows, fh)
    return EXIT_OK


def _cmd_adcap(args) -> int:
    problem = load_adcap(args.scenario)
    report = run_adcap(problem, args.theta, args.tol, _est(args))
    with _output(args.out) as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _cmd_sne(args) -> int:
    auc = load_scenario(args.scenario).require_templates()
    res = sne_grid_search(auc, args.pricing, args.selection, grid=args.grid,
                          budget=args.budget, workers=args.workers)
    report = {"found": res.found, "bids": None if res.bids is None else res.bids.tolist(),
              "template": res.template, "resolution": list(res.resolution),
              "profiles_checked": res.candidates, "message": res.message}
    with _output(args.out) as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _cmd_replay(args) -> int:
    if args.slots is not None:
        try:
            slots = [float(x) for x in args.slots.split(",")]
        except ValueError as exc:
            raise UsageError(f"--slots: {exc}") from exc
    elif args.scenario is not None:
        slots = load_scenario(args.scenario).require_market().slots
    else:
        raise UsageError("replay needs --slots or --scenario")
    log = read_log(args.log)
    rows = replay(log, args.rule, slots, parse_grid(args.grid), args.workers)
    if log.skipped:
        print(f"skipped {log.skipped} malformed line(s)", file=sys.stderr)
    with _output(args.out) as fh:
        write_csv(rows, fh, ReplayRow.COLUMNS)
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    params = parse_params(args.param)
    if args.workers is not None and args.name in ("tc-nonexistence", "ti-nonexistence"):
        params["workers"] = args.workers
    ce = run_counterexample(args.name, params)
    print(ce.report())
    if args.out:
        with _output(args.out) as fh:
            json.dump(ce.scenario_dict(), fh, indent=2)
            fh.write("\n")
    return EXIT_OK if ce.reproduced else EXIT_CLAIM


COMMANDS = {"sweep": _cmd_sweep, "frontier": _cmd_sweep, "adcap": _cmd_adcap,
            "sne-search": _cmd_sne, "replay": _cmd_replay, "counterexample": _cmd_counterexample}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, AuctionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
