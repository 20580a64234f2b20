"""Command line entry point: ``bygars run | sweep | verify``.

Exit status: 0 success, 1 configuration error, 2 runtime error,
3 failed verification.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import harness
from .config import load_config
from .core import ConfigError
from .simulation import SimulationError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("bygars")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bygars", description="Byzantine-resilient SGD simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one configuration and write its metrics")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default=".")

    s = sub.add_parser("sweep", help="run a config over one axis and several seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, help=f"one of {', '.join(harness.SWEEP_AXES)}")
    s.add_argument("--values", nargs="+", required=True)
    s.add_argument("--seeds", nargs="*", type=int, required=True)
    s.add_argument("--out", default="sweep")
    s.add_argument("--jobs", type=int, default=1)

    v = sub.add_parser("verify", help="run theory checks on a theorem_check config")
    v.add_argument("--config", required=True)
    v.add_argument("--checks", nargs="*", required=True)
    v.add_argument("--out", default="verify_report.jsonl")
    v.add_argument("--n-trials", type=int)
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    result = harness.run_to_dir(cfg, args.out)
    f = result.final
    print(f"t={f.t} train_loss={f.train_loss!r} test_loss={f.test_loss!r}"
          + (f" test_accuracy={f.test_accuracy!r}" if f.test_accuracy is not None else ""))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [harness.parse_axis_value(args.axis, v) for v in args.values]
    rows = harness.sweep(cfg, args.axis, values, args.seeds, jobs=args.jobs, out_dir=args.out)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    harness.write_sweep_table(rows, Path(args.out) / "sweep.csv")
    for value, mean in harness.sweep_means(rows).items():
        print(f"{args.axis}={value} mean_final_test_loss={mean!r}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    reports = harness.verify_cmd(cfg, args.checks, args.out, n_trials=args.n_trials)
    for r in reports:
        print(r.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "sweep": _cmd_sweep, "verify": _cmd_verify}[args.command]
    try:
        return handler(args)
    except (ConfigError, yaml.YAMLError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"runtime error: {exc} [cause={exc.cause}]", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
