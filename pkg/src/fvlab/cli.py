"""Command-line entry point: ``fvlab <experiment> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .errors import DomainError, EventCapExceeded, SpecParseError, UndeterminedError
from .experiments import EXPERIMENTS, ExperimentConfig, load_config_file, render, run

log = logging.getLogger("fvlab")

EXIT_SPEC = 2
EXIT_EVENT_CAP = 3

# options that are stored as experiment parameters rather than config fields
_PARAM_FLAGS = ("bmax", "eps", "b", "k", "s", "ball", "bset", "mu0")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--lambda", dest="lambda_spec", help="Lambda measure, e.g. kingman:1, beta:1.5, atoms:0.5@0.3")
    g.add_argument("--levy", dest="levy_spec", help="mutation process, e.g. brownian:sigma=1, stable:alpha=1.5")
    g.add_argument("--n", type=int, help="number of levels / sample size")
    g.add_argument("--t", type=float, help="time horizon")
    g.add_argument("--tgrid", help="time grid geo:<lo>,<hi>,<count> or lin:<lo>,<hi>,<count>")
    g.add_argument("--replicas", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output path (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--event-cap", type=int, dest="event_cap")
    g.add_argument("--workers", type=int)
    g.add_argument("--config", help="INI file with [defaults] and per-experiment sections")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="extra experiment parameter")
    g.add_argument("--bmax", help="largest b in the rates table")
    g.add_argument("--eps", help="enlargement radius")
    g.add_argument("--b", help="frequency threshold for the cluster-hit bound")
    g.add_argument("--k", help="number of jumps in the support probe")
    g.add_argument("--s", help="lookback for the cluster-mass bound")
    g.add_argument("--ball", help="test ball <x1/x2...>,<radius>")
    g.add_argument("--bset", help="bounds: finite set B as <x1>;<x2>;...")
    g.add_argument("--mu0", help="initial measure point:<x> or uniform:<x1>;<x2>;...")
    g.add_argument("--lookdown", action="store_true", help="coalescent: dump lookdown event logs instead")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fvlab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"fvlab {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    common = _common()
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} preset")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {"params": {}}
    if args.config:
        values = load_config_file(args.config, args.experiment)
    for key in ("lambda_spec", "levy_spec", "n", "t", "tgrid", "replicas", "seed", "out", "format", "event_cap", "workers"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    params = dict(values.pop("params", {}))
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise SpecParseError(f"--param expects KEY=VALUE, got {item!r}")
        params[key.strip()] = value.strip()
    for key in _PARAM_FLAGS:
        v = getattr(args, key)
        if v is not None:
            params[key] = v
    if args.lookdown:
        params["lookdown"] = "1"
    return ExperimentConfig(experiment=args.experiment, params=params, **values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        log.info("running %s with seed %d", cfg.experiment, cfg.seed)
        text = render(cfg, run(cfg))
    except EventCapExceeded as exc:
        print(f"fvlab: event cap exceeded: {exc}", file=sys.stderr)
        return EXIT_EVENT_CAP
    except (SpecParseError, DomainError, UndeterminedError) as exc:
        print(f"fvlab: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
