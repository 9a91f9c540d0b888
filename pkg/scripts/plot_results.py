#!/usr/bin/env python3
"""
Plot runner outputs.

Reads a `run` directory (trajectory.csv, mean.csv, band_*.csv), a `rates`
directory (rates.csv, rates_fit.json) or a `sweep` directory (sweep.csv) and
writes PNG figures next to the data:
  - trajectory.png (RMSE and RMSR against time, stop marker)
  - mean.png       (1D runs: ensemble mean, truth and confidence bands)
  - rates.png      (log-log error against noise level with the fitted line)
  - sweep.png      (RMSE against theta per ensemble size, and against N per theta)

Usage:
  python scripts/plot_results.py --run results/run
  python scripts/plot_results.py --rates results/rates
  python scripts/plot_results.py --sweep results/sweep
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402


def load_summary(run_dir: Path) -> dict:
    path = run_dir / "summary.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def plot_trajectory(run_dir: Path) -> Path:
    df = pd.read_csv(run_dir / "trajectory.csv")
    summary = load_summary(run_dir)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.semilogy(df["t"], df["rmsr"], label="RMSR", color="tab:blue")
    if df["rmse"].notna().any():
        ax.semilogy(df["t"], df["rmse"], label="RMSE", color="tab:orange")
    threshold = summary.get("discrepancy_threshold")
    if threshold:
        ax.axhline(threshold, color="gray", linestyle=":", label="tau * delta")
    if summary.get("stop_time") is not None:
        ax.axvline(summary["stop_time"], color="tab:red", linestyle="--", label="stop")
    ax.set_xlabel("t")
    ax.set_ylabel("error")
    ax.set_title(f"{summary.get('parameters', {}).get('problem', 'run')}: {summary.get('termination', '')}")
    ax.legend()
    plt.tight_layout()
    out = run_dir / "trajectory.png"
    plt.savefig(out)
    plt.close(fig)
    return out


def plot_mean(run_dir: Path) -> Path | None:
    mean = pd.read_csv(run_dir / "mean.csv")
    if "x" not in mean.columns:
        return None
    fig, ax = plt.subplots(figsize=(8, 4.5))
    bands = sorted(run_dir.glob("band_*.csv"), key=lambda p: -float(p.stem.split("_", 1)[1]))
    for path, alpha in zip(bands, np.linspace(0.2, 0.45, len(bands))):
        band = pd.read_csv(path)
        level = float(path.stem.split("_", 1)[1])
        ax.fill_between(mean["x"], band["lower"], band["upper"], alpha=alpha, color="tab:blue", label=f"{level:.0%} band")
    ax.plot(mean["x"], mean["mean"], color="tab:blue", label="ensemble mean")
    ax.plot(mean["x"], mean["truth"], color="black", linestyle="--", label="truth")
    ax.set_xlabel("x")
    ax.legend()
    plt.tight_layout()
    out = run_dir / "mean.png"
    plt.savefig(out)
    plt.close(fig)
    return out


def plot_rates(rates_dir: Path) -> Path:
    df = pd.read_csv(rates_dir / "rates.csv")
    fit = json.loads((rates_dir / "rates_fit.json").read_text(encoding="utf-8"))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(df["delta"], df["rmse"], "o", label="RMSE at stop")
    grid = np.geomspace(df["delta"].min(), df["delta"].max(), 50)
    ax.loglog(grid, np.exp(fit["intercept"]) * grid ** fit["slope"], label=f"fit, slope {fit['slope']:.3f}")
    ax.set_xlabel("delta")
    ax.set_ylabel("RMSE")
    ax.set_title(f"theory exponent {fit['theoretical_exponent']:.3f}, r^2 = {fit['r_squared']:.4f}")
    ax.legend()
    plt.tight_layout()
    out = rates_dir / "rates.png"
    plt.savefig(out)
    plt.close(fig)
    return out


def plot_sweep(sweep_dir: Path) -> Path:
    df = pd.read_csv(sweep_dir / "sweep.csv")
    fig, (by_theta, by_size) = plt.subplots(1, 2, figsize=(11, 4.5))
    for size, group in df.groupby("ensemble_size"):
        by_theta.plot(group["theta"], group["rmse"], "o-", label=f"N = {size}")
    for theta, group in df.groupby("theta"):
        by_size.plot(group["ensemble_size"], group["rmse"], "o-", label=f"theta = {theta:g}")
    by_theta.set_xlabel("theta")
    by_size.set_xlabel("ensemble size N")
    by_size.set_xscale("log")
    for ax in (by_theta, by_size):
        ax.set_ylabel("RMSE at stop")
        ax.legend()
    plt.tight_layout()
    out = sweep_dir / "sweep.png"
    plt.savefig(out)
    plt.close(fig)
    return out


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(description="Plot runner outputs")
    p.add_argument("--run", help="Directory written by `main.py run`")
    p.add_argument("--rates", help="Directory written by `main.py rates`")
    p.add_argument("--sweep", help="Directory written by `main.py sweep`")
    args = p.parse_args(argv)
    if not (args.run or args.rates or args.sweep):
        p.error("pass at least one of --run, --rates, --sweep")
    return args


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    written = []
    if args.run:
        run_dir = Path(args.run)
        written.append(plot_trajectory(run_dir))
        written.append(plot_mean(run_dir))
    if args.rates:
        written.append(plot_rates(Path(args.rates)))
    if args.sweep:
        written.append(plot_sweep(Path(args.sweep)))
    for path in written:
        if path is not None:
            print(f"Wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
