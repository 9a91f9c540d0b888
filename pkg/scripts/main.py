#!/usr/bin/env python3
"""
Command line runner for the SAR experiments and theory checks.

Subcommands:
  run        one ensemble run: trajectory.csv, mean.csv, band_<level>.csv, summary.json
  rates      runs over a list of noise levels: rates.csv, rates_fit.json
  sweep      runs over theta and ensemble size on one data set: sweep.csv, sweep.json
  constants  constants chain of the rate analysis: constants.csv
  check      golden table comparison and inequality sweeps: check.json

Usage examples:
  python scripts/main.py run --config configs/elliptic1d.ini --out results/run
  python scripts/main.py rates --config configs/rates_diagonal.ini
  python scripts/main.py sweep --config configs/sweep_elliptic1d.ini
  python scripts/main.py constants
  python scripts/main.py check --seed 7

Exit codes: 0 success (a failed precondition is a valid outcome), 1 config
error, 2 numerical divergence, 3 anything else.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable

import psutil

from sar import config as sar_config
from sar import experiments
from sar.errors import ConfigError, DivergenceError

log = logging.getLogger("sar.main")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGENCE = 2
EXIT_INTERNAL = 3


def resolve_threads(requested: int | None) -> int | None:
    """``0`` means one worker per physical core."""
    if requested is None:
        return None
    if requested == 0:
        return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return requested


class ExperimentRunner:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        self.sections = sar_config.read_sections(Path(args.config) if args.config else None)
        self.out = Path(args.out) if args.out else Path("results") / args.command
        self.threads = resolve_threads(args.threads)

    def _experiment(self, section: str) -> sar_config.ExperimentConfig:
        cfg = sar_config.experiment_config(self.sections, section, {"seed": self.args.seed, "threads": self.threads})
        if cfg.threads == 0:
            cfg = dataclasses.replace(cfg, threads=resolve_threads(0))
        log.debug("%s config: %s", section, cfg.describe())
        return cfg

    def run(self) -> None:
        print("\n=== SAR ensemble run ===")
        cfg = self._experiment("run")
        summary = experiments.cmd_run(cfg, self.out)
        print(f"termination: {summary['termination']}, stop step: {summary['stop_step']}")
        print(f"final rmsr: {summary['final_rmsr']:.6g}, final rmse: {summary['final_rmse']:.6g}")
        if summary["termination"] == "PreconditionFailed":
            print("warning: initial residual already below tau*delta, returned the initial guess")

    def rates(self) -> None:
        print("\n=== Convergence rate study ===")
        cfg = self._experiment("rates")
        fit = experiments.cmd_rates(cfg, self.out)
        print(
            f"slope: {fit['slope']:.4f} (theory {fit['theoretical_exponent']:.4f}), "
            f"r^2: {fit['r_squared']:.4f}"
        )

    def sweep(self) -> None:
        print("\n=== Randomization and sample size sweep ===")
        cfg = self._experiment("sweep")
        rows = experiments.cmd_sweep(cfg, self.out)
        for row in rows:
            print(f"  theta {row.theta:<8g} N {row.ensemble_size:<5d} {row.termination:<10} rmse {row.rmse:.6g}")

    def constants(self) -> None:
        print("\n=== Constants table ===")
        params = sar_config.theory_params(self.sections, "constants")
        table = experiments.cmd_constants(params, self.out)
        rows = list(table.rows())
        width = max(len(name) for name, _, _ in rows)
        for name, value, formula in rows:
            print(f"  {name:<{width}}  {value:12.4f}   {formula}")

    def check(self) -> None:
        print("\n=== Theory checks ===")
        params = sar_config.theory_params(self.sections, "check")
        check = sar_config.check_config(self.sections, {"seed": self.args.seed})
        report = experiments.cmd_check(params, check, self.out)
        for key in ("golden_ok", "constants_ok"):
            print(f"  {key}: {report[key]}")
        for key in ("sup_bound_sweep", "integral_bound_sweep", "integral_bound_long_horizon"):
            sweep = report[key]
            print(f"  {key}: {sweep['violations']} violations in {sweep['evaluated']}")
        print(f"  passed: {report['passed']}")

    def dispatch(self) -> None:
        registry: dict[str, Callable[[], None]] = {
            "run": self.run,
            "rates": self.rates,
            "sweep": self.sweep,
            "constants": self.constants,
            "check": self.check,
        }
        registry[self.args.command]()
        print(f"Wrote outputs to {self.out}")


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(description="Stochastic asymptotical regularization experiments")
    p.add_argument("command", choices=["run", "rates", "sweep", "constants", "check"], help="What to compute")
    p.add_argument("--config", help="INI file with [run], [rates], [sweep], [constants] or [check] sections")
    p.add_argument("--out", help="Output directory (default: results/<command>)")
    p.add_argument("--seed", type=int, help="Master seed, overrides the config")
    p.add_argument("--threads", type=int, help="Worker threads for particle updates (0 = auto)")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    args = p.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        p.error("--seed must be non-negative")
    if args.threads is not None and args.threads < 0:
        p.error("--threads must be non-negative")
    return args


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        ExperimentRunner(args).dispatch()
    except ConfigError as exc:
        for line in exc.violations:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
