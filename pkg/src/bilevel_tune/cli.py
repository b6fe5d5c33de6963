"""``bilevel-tune`` command-line entry point.

Exit codes: 0 on success, 2 on a configuration error, 3 on a solver error
(partial run logs are written before exiting).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .errors import BilevelTuneError, ConfigError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


def build_parser():
    p = argparse.ArgumentParser(prog="bilevel-tune", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=ex.SUBCOMMANDS)
    p.add_argument("--config", help="flat YAML or JSON configuration file")
    p.add_argument("--out", help="output directory (default: runs/<subcommand>)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--scale", choices=sorted(ex.PRESETS), default=None,
                   help="size preset (default: desk)")
    p.add_argument("--images", help="MNIST IDX image file")
    p.add_argument("--labels", help="MNIST IDX label file")
    p.add_argument("--thetas", help="tune/sweep summary CSV with learned thetas (validate)")
    p.add_argument("--jobs", type=int, help="parallel runs for sweep")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def run(args):
    cfg = ex.load_config(args.config, args.scale, args.seed)
    if args.images:
        cfg.images_path = args.images
    if args.labels:
        cfg.labels_path = args.labels
    if args.jobs:
        cfg.jobs = args.jobs
    out = Path(args.out or Path("runs") / args.subcommand)
    if args.subcommand == "bounds-compare":
        summary = ex.cmd_bounds_compare(cfg, out)
        print(f"kappa={summary['kappa']:.6g} final ratio a posteriori/a priori="
              f"{summary['final_tightness_ratio']:.3e}")
    elif args.subcommand == "tune":
        for name, r in ex.cmd_tune(cfg, out).items():
            print(f"{name:>8}: theta=({r.theta[0]:.4f}, {r.theta[1]:.4f}) F={r.F:.6g} "
                  f"fista={r.fista_iterations}")
    elif args.subcommand == "sweep":
        _, spreads = ex.cmd_sweep(cfg, out)
        for name, s in spreads.items():
            print(f"{name:>8}: spread theta1={s[0]:.4g} theta2={s[1]:.4g}")
    else:
        if not args.thetas:
            raise ConfigError("validate needs --thetas pointing at a tune or sweep summary")
        rows = ex.cmd_validate(cfg, out, ex.read_thetas(args.thetas))
        print(f"{len(rows)} accuracy rows written to {out / 'validation_accuracy.csv'}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BilevelTuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
