"""``beatsim`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__, commands
from .config import ConfigError, RunConfig, load_config

SUBCOMMANDS = ("validate", "trajectory", "ensemble", "sweep", "compare-incoherent")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beatsim",
        description="Quantum-trajectory simulation of jump-driven light shifts of a "
                    "ground-state Zeeman coherence.")
    parser.add_argument("--version", action="version", version=f"beatsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="INI configuration file")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker processes for ensembles (advisory)")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="format of tabular outputs")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    out = args.out or os.environ.get("BEATSIM_OUT")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    return config.with_overrides(master_seed=args.seed, output_dir=out,
                                 threads=max(1, args.threads))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = resolve_config(args)
        if args.command != "compare-incoherent":
            config.require_seed()
        if args.command == "validate":
            report = commands.cmd_validate(config)
            for check in report["checks"]:
                status = "PASS" if check["passed"] else "FAIL"
                print(f"{status} {check['name']}: error={check['error']:.3g} "
                      f"tolerance={check['tolerance']:.3g}")
            return 0 if report["all_passed"] else 1
        if args.command == "trajectory":
            for r in commands.cmd_trajectory(config, args.format):
                if r.estimate:
                    print(f"omega={r.omega:g}: slope={r.estimate.slope:.6g} "
                          f"+- {r.estimate.slope_stderr:.2g} (predicted {r.estimate.predicted_slope:.6g})")
            return 0
        if args.command == "ensemble":
            for r in commands.cmd_ensemble(config, args.format):
                print(f"omega={r.omega:g}: Gamma={r.fit.decay_rate:.6g} "
                      f"w={r.fit.angular_frequency:.6g}")
            return 0
        if args.command == "sweep":
            result = commands.cmd_sweep(config, args.format)
            fit = result.shift_fit
            if fit is not None:
                print(json.dumps({"shift_slope": fit.slope, "beta": fit.beta,
                                  "predicted_slope": result.predicted["shift_slope"]}))
            return 0
        if args.command == "compare-incoherent":
            for row in commands.cmd_compare_incoherent(config, args.format):
                print(f"split={row['split']:g}: coherent={row['coherent']:.6g} "
                      f"incoherent={row['incoherent']:.6g} rel_gap={row['relative_gap']:.3g}")
            return 0
    except ConfigError as exc:
        print(f"beatsim: config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"beatsim: error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
