"""
Experiment pipelines behind the command line subcommands and their output files.

Every file is a pure function of (config, seeds): no timestamps, host names or
timings are written, reals carry 17 significant digits and JSON keys are
sorted, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import diagnostics, flow, problems, theory
from .config import CheckConfig, ExperimentConfig
from .core import ForwardProblem, GridSpec, GridVector
from .errors import ConfigError, DivergenceError, SarError

log = logging.getLogger(__name__)


def fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        json.dump(_plain(payload), f, indent=2, sort_keys=True)
        f.write("\n")


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


@dataclass(frozen=True)
class Setup:
    problem: ForwardProblem
    truth: GridVector
    y_exact: GridVector
    y_delta: GridVector
    initial_guess: GridVector
    delta_abs: float
    scale: float = 1.0


def _constant_guess(cfg: ExperimentConfig, grid: GridSpec, truth: GridVector) -> GridVector:
    if cfg.initial_guess == "mean":
        return problems.mean_initial_guess(truth)
    return GridVector.full(grid, float(cfg.initial_guess))


def build_setup(cfg: ExperimentConfig, noise_level: float | None = None, data_seed: int | None = None) -> Setup:
    """Problem, truth and noisy data for one run; noise is drawn from ``data_seed``."""
    level = cfg.noise_level if noise_level is None else noise_level
    rng = np.random.default_rng(cfg.data_seed if data_seed is None else data_seed)

    if cfg.problem in ("elliptic1d", "elliptic2d"):
        dim = 1 if cfg.problem == "elliptic1d" else 2
        grid = GridSpec(dim, cfg.n)
        problem = problems.EllipticProblem(grid, floor=cfg.clip_floor, solver=cfg.solver)
        truth = problems.true_parameter(f"{dim}d", grid)
        scale = 1.0
        if cfg.rescale:
            scale = 1.0 / problems.operator_norm_estimate(problem, truth)
            problem = problem.with_scale(scale)
            log.info("rescaled forward operator by rho = %.6g", scale)
        y = problem.apply(truth)
        y_delta = problems.synthesize_data(y, level, rng)
        # expected norm of the synthesized perturbation
        delta_abs = level * float(np.max(np.abs(y.values))) * math.sqrt(grid.weight * grid.size)
        return Setup(problem, truth, y, y_delta, _constant_guess(cfg, grid, truth), delta_abs, scale)

    if cfg.problem == "diagonal":
        problem = problems.DiagonalProblem.power_law(cfg.n, cfg.singular_exponent)
        x_bar = None
        if cfg.initial_guess != "mean":
            x_bar = GridVector.full(problem.param_grid, float(cfg.initial_guess))
        case = problems.make_source_case(
            cfg.gamma, cfg.source_bound, problem, rng, profile=cfg.source_profile, initial_guess=x_bar
        )
        y = problem.apply(case.x_true)
        y_delta = problems.synthesize_data_at_level(y, level, rng)
        return Setup(problem, case.x_true, y, y_delta, case.initial_guess, level)

    grid = GridSpec(1, cfg.n, 0.0, 1.0)
    problem = problems.OscillatoryProblem(grid, cfg.amplitude)
    truth = GridVector.full(grid, cfg.truth_value)
    y = problem.apply(truth)
    y_delta = problems.synthesize_data_at_level(y, level, rng)
    return Setup(problem, truth, y, y_delta, _constant_guess(cfg, grid, truth), level)


def sar_config(cfg: ExperimentConfig, setup: Setup) -> tuple[flow.SarConfig, bool]:
    """Flow settings for a setup; dt = 0 selects 0.5 / norm(F'(x_bar))**2."""
    dt = cfg.dt
    auto = dt == 0
    if auto:
        op_norm = problems.operator_norm_estimate(setup.problem, setup.initial_guess)
        dt = 0.5 / (op_norm * op_norm)
        log.info("automatic step size dt = %.6g from norm(F'(x_bar)) = %.6g", dt, op_norm)
    sar = flow.SarConfig(
        dt=dt,
        theta=cfg.theta,
        ensemble_size=cfg.ensemble_size,
        tau=cfg.tau,
        eps0=cfg.eps0,
        eta=cfg.eta,
        delta0=cfg.delta0,
        delta=setup.delta_abs,
        max_steps=cfg.max_steps,
        cov=cfg.covariance_spec(),
        master_seed=cfg.seed,
        threads=cfg.threads,
        log_every=cfg.log_every,
    )
    return sar, auto


def _coordinate_columns(grid: GridSpec) -> tuple[list[str], list[np.ndarray]]:
    coords = grid.coordinates()
    names = ["x"] if grid.dim == 1 else ["x1", "x2"]
    return names, list(coords)


def _band_name(level: float) -> str:
    return f"band_{format(level, 'g')}.csv"


def cmd_run(cfg: ExperimentConfig, out_dir: Path) -> dict:
    setup = build_setup(cfg)
    sar, auto_dt = sar_config(cfg, setup)
    record = flow.run(setup.problem, setup.truth, setup.y_delta, sar, initial_guess=setup.initial_guess)
    final = record.final
    assert final is not None

    write_csv(
        out_dir / "trajectory.csv",
        ["step", "t", "rmsr", "rmse", "f_k"],
        (
            [k, record.times[k], record.rmsr[k], record.rmse[k], record.noise_coefficients[k]]
            for k in range(record.steps)
        ),
    )

    mean = final.mean()
    names, coords = _coordinate_columns(mean.grid)
    write_csv(
        out_dir / "mean.csv",
        names + ["mean", "truth"],
        ([*(c[i] for c in coords), mean.values[i], setup.truth.values[i]] for i in range(mean.values.size)),
    )

    bands_written = []
    if final.size >= 2:
        for level in cfg.levels:
            band = diagnostics.confidence_band(final.particles, level)
            write_csv(
                out_dir / _band_name(level),
                ["node", "lower", "mean", "upper"],
                (
                    [i, band.lower.values[i], band.mean.values[i], band.upper.values[i]]
                    for i in range(band.mean.values.size)
                ),
            )
            bands_written.append(_band_name(level))
    else:
        log.warning("ensemble of size 1: no confidence bands written")

    split = diagnostics.bias_variance(final.particles, setup.truth)
    summary = {
        "termination": record.termination.value,
        "stop_step": record.stop_step,
        "stop_time": record.stop_time,
        "steps_taken": final.step,
        "initial_rmsr": record.rmsr[0],
        "final_rmsr": record.rmsr[-1],
        "initial_rmse": record.rmse[0],
        "final_rmse": record.rmse[-1],
        "bias_sq": split.bias_sq,
        "variance": split.variance,
        "delta_abs": setup.delta_abs,
        "discrepancy_threshold": sar.tau * sar.delta,
        "dt": sar.dt,
        "dt_automatic": auto_dt,
        "operator_scale": setup.scale,
        "clip_events": record.clip_events,
        "band_files": bands_written,
        "parameters": cfg.describe(),
        "flow": sar.describe(),
    }
    write_json(out_dir / "summary.json", summary)
    if record.termination is flow.Termination.PRECONDITION_FAILED:
        log.warning("precondition failed: initial residual is already below tau*delta")
    return summary


@dataclass(frozen=True)
class RateRow:
    delta: float
    stop_step: int | None
    rmse: float


def fit_rates(rows: Sequence[RateRow], gamma: float) -> dict:
    fit = diagnostics.rate_fit([(r.delta, r.rmse) for r in rows])
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "theoretical_exponent": 2.0 * gamma / (2.0 * gamma + 1.0),
    }


def write_rates(rows: Sequence[RateRow], fit: dict, out_dir: Path, parameters: dict) -> None:
    write_csv(out_dir / "rates.csv", ["delta", "stop_step", "rmse"], ([r.delta, r.stop_step, r.rmse] for r in rows))
    write_json(out_dir / "rates_fit.json", {**fit, "parameters": parameters})


def cmd_rates(cfg: ExperimentConfig, out_dir: Path) -> dict:
    if len(cfg.deltas) < 3:
        raise ConfigError(f"rates needs at least three noise levels, got {len(cfg.deltas)}")
    rows: list[RateRow] = []
    for index, delta in enumerate(cfg.deltas):
        log.info("rates: delta = %.6g (%d of %d)", delta, index + 1, len(cfg.deltas))
        setup = build_setup(cfg, noise_level=delta, data_seed=cfg.data_seed + index)
        sar, _ = sar_config(cfg, setup)
        try:
            record = flow.run(setup.problem, setup.truth, setup.y_delta, sar, initial_guess=setup.initial_guess)
        except DivergenceError as exc:
            raise DivergenceError(f"delta = {delta:.6g}: {exc}", step=exc.step, particle=exc.particle) from exc
        except SarError:
            log.error("run failed for delta = %.6g", delta)
            raise
        if record.termination is not flow.Termination.STOPPED:
            log.warning("delta = %.6g ended with %s", delta, record.termination.value)
        final_rmse = record.rmse[-1]
        assert final_rmse is not None
        rows.append(RateRow(delta, record.stop_step, final_rmse))
    fit = fit_rates(rows, cfg.gamma)
    write_rates(rows, fit, out_dir, cfg.describe())
    return fit


@dataclass(frozen=True)
class SweepRow:
    theta: float
    ensemble_size: int
    termination: str
    stop_step: int | None
    rmse: float
    rmsr: float
    bias_sq: float
    variance: float


SWEEP_HEADER = ["theta", "ensemble_size", "termination", "stop_step", "rmse", "rmsr", "bias_sq", "variance"]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path) -> list[SweepRow]:
    """One run per (theta, ensemble size) pair on a single noisy data set.

    Every run uses the same data and master seed, so rows differ only in the
    swept settings.
    """
    setup = build_setup(cfg)
    base, _ = sar_config(cfg, setup)
    violations = [v for theta in cfg.thetas for v in flow.validate_params(replace(base, theta=theta))]
    if violations:
        raise ConfigError(sorted(set(violations)))

    rows: list[SweepRow] = []
    total = len(cfg.thetas) * len(cfg.ensemble_sizes)
    for theta in cfg.thetas:
        for size in cfg.ensemble_sizes:
            log.info("sweep: theta = %.6g, N = %d (%d of %d)", theta, size, len(rows) + 1, total)
            sar = replace(base, theta=theta, ensemble_size=size)
            try:
                record = flow.run(setup.problem, setup.truth, setup.y_delta, sar, initial_guess=setup.initial_guess)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"theta = {theta:.6g}, N = {size}: {exc}", step=exc.step, particle=exc.particle
                ) from exc
            final = record.final
            assert final is not None
            split = diagnostics.bias_variance(final.particles, setup.truth)
            rows.append(
                SweepRow(
                    theta=theta,
                    ensemble_size=size,
                    termination=record.termination.value,
                    stop_step=record.stop_step,
                    rmse=math.sqrt(split.total),
                    rmsr=record.rmsr[-1],
                    bias_sq=split.bias_sq,
                    variance=split.variance,
                )
            )

    write_csv(out_dir / "sweep.csv", SWEEP_HEADER, ([getattr(r, name) for name in SWEEP_HEADER] for r in rows))
    best = min(rows, key=lambda r: r.rmse)
    write_json(
        out_dir / "sweep.json",
        {
            "best": {"theta": best.theta, "ensemble_size": best.ensemble_size, "rmse": best.rmse},
            "delta_abs": setup.delta_abs,
            "dt": base.dt,
            "parameters": cfg.describe(),
        },
    )
    return rows


def cmd_constants(params: theory.TheoryParams, out_dir: Path) -> theory.ConstantsTable:
    table = theory.constants_table(params)
    write_csv(out_dir / "constants.csv", ["name", "value", "formula"], ([n, v, f] for n, v, f in table.rows()))
    return table


PAIR_CHECK_TIMES = (0.1, 1.0, 10.0, 100.0)


def cmd_check(params: theory.TheoryParams, check: CheckConfig, out_dir: Path) -> dict:
    golden = theory.compare_with_reference(theory.constants_table(theory.TheoryParams()))
    sup = theory.sup_sweep(check.samples, check.seed, check.sup_grid_points)
    integral = theory.integral_sweep(check.samples, check.t_max, check.seed + 1)
    long_horizon = theory.integral_sweep(check.samples, check.long_t_max, check.seed + 2)
    k, j = 0.5, 2.0 * params.gamma + 0.5
    pair = [{"t": t, **theory.integral_bound(k, j, t)._asdict()} for t in PAIR_CHECK_TIMES]

    constants_ok = True
    try:
        table = theory.constants_table(params).as_dict()
    except SarError as exc:
        constants_ok = False
        table = {"error": str(exc)}

    golden_ok = all(entry["ok"] for entry in golden.values())
    report = {
        "golden_table": golden,
        "golden_ok": golden_ok,
        "constants": table,
        "constants_ok": constants_ok,
        "sup_bound_sweep": sup.as_dict(),
        "integral_bound_sweep": integral.as_dict(),
        "integral_bound_long_horizon": long_horizon.as_dict(),
        "integral_bound_pair": {"k": k, "j": j, "evaluations": pair},
        "passed": golden_ok and constants_ok and sup.all_hold and integral.all_hold,
        "parameters": {**asdict(params), **asdict(check)},
    }
    write_json(out_dir / "check.json", report)
    if long_horizon.violations:
        log.info(
            "integral bound fails on %d of %d long-horizon draws (expected beyond t ~ 1)",
            long_horizon.violations,
            long_horizon.evaluated,
        )
    return report

