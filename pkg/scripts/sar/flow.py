"""
The SAR ensemble integrator.

Each particle follows the Euler-Maruyama step

    x_{k+1} = x_k + dt * F'(x_k)* (y_delta - F(x_k)) + f_k * dB_k

with a shared coefficient f_k = r_k * theta / sqrt(1 + t_k), where r_k is the
ensemble root mean-square residual. Particles draw independent increments
from per-(particle, step) random streams, so the result does not depend on
how the particle updates are scheduled across threads.

The run stops at the first step with r_k**2 < (tau * delta)**2.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .core import ForwardProblem, GridVector, mean_square_distance, norm
from .errors import ConfigError, DivergenceError
from .wiener import CovarianceSpec, RngStream, sample_increment

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SarConfig:
    dt: float
    theta: float = 0.0
    ensemble_size: int = 1
    tau: float = 2.0
    eps0: float = 1.0
    eta: float = 0.1
    delta0: float = 1.0
    delta: float = 0.0
    max_steps: int = 100_000
    cov: CovarianceSpec = field(default_factory=CovarianceSpec.identity)
    master_seed: int = 0
    threads: int = 1
    log_every: int = 1000
    divergence_factor: float = 1e6

    def describe(self) -> dict:
        return {
            "dt": self.dt,
            "theta": self.theta,
            "ensemble_size": self.ensemble_size,
            "tau": self.tau,
            "eps0": self.eps0,
            "eta": self.eta,
            "delta0": self.delta0,
            "delta": self.delta,
            "max_steps": self.max_steps,
            "covariance": self.cov.describe(),
            "master_seed": self.master_seed,
            "divergence_factor": self.divergence_factor,
        }


@dataclass(frozen=True)
class AdmissibilityBounds:
    eps0_upper: float
    tau_lower: float
    theta_upper: float


def admissibility_bounds(eta: float, eps0: float, delta0: float) -> AdmissibilityBounds:
    """Upper bound on eps0, lower bound on tau and upper bound on theta."""
    eps0_upper = 2.0 * (1.0 / eta - 1.0) if eta > 0 else math.inf
    denominator = 2.0 - (2.0 + eps0) * eta
    tau_lower = (2.0 + 2.0 * eta) / denominator if denominator > 0 else math.inf
    theta_upper = math.sqrt(eps0 * eta) / delta0 if eps0 * eta >= 0 and delta0 > 0 else math.nan
    return AdmissibilityBounds(eps0_upper, tau_lower, theta_upper)


def validate_params(cfg: SarConfig) -> list[str]:
    """Every violated constraint as one line; empty means admissible."""
    violations: list[str] = []
    if not cfg.dt > 0:
        violations.append(f"dt = {cfg.dt} must be positive")
    if cfg.ensemble_size < 1:
        violations.append(f"ensemble_size = {cfg.ensemble_size} must be at least 1")
    if cfg.max_steps < 0:
        violations.append(f"max_steps = {cfg.max_steps} must be non-negative")
    if cfg.delta < 0:
        violations.append(f"delta = {cfg.delta} must be non-negative")
    if not cfg.delta0 > 0:
        violations.append(f"delta0 = {cfg.delta0} must be positive")
    if not 0.0 < cfg.eta < 1.0:
        violations.append(f"eta = {cfg.eta} must lie in (0, 1)")
        return violations

    bounds = admissibility_bounds(cfg.eta, cfg.eps0, cfg.delta0)
    if cfg.eps0 <= 0:
        violations.append(f"eps0 = {cfg.eps0} must be positive")
    elif cfg.eps0 >= bounds.eps0_upper:
        violations.append(f"eps0 = {cfg.eps0} exceeds 2(1/eta - 1) = {bounds.eps0_upper:.6g}")
    if math.isinf(bounds.tau_lower):
        violations.append(f"2 - (2 + eps0)*eta = {2.0 - (2.0 + cfg.eps0) * cfg.eta:.6g} leaves no admissible tau")
    elif not cfg.tau > bounds.tau_lower:
        violations.append(
            f"tau = {cfg.tau} must exceed (2 + 2*eta)/(2 - (2 + eps0)*eta) = {bounds.tau_lower:.6g}"
        )
    if cfg.theta < 0:
        violations.append(f"theta = {cfg.theta} must be non-negative")
    elif cfg.eps0 > 0 and cfg.delta0 > 0 and cfg.theta > bounds.theta_upper:
        violations.append(f"theta = {cfg.theta} exceeds sqrt(eps0*eta)/delta0 = {bounds.theta_upper:.6g}")
    return violations


def noise_scale(t: float, theta: float) -> float:
    if t < 0 or theta < 0:
        raise ValueError("t and theta must be non-negative")
    return theta / math.sqrt(1.0 + t)


def noise_coefficient(rmsr: float, t: float, theta: float) -> float:
    """f_k = r_k * s_k."""
    return rmsr * noise_scale(t, theta)


def check_stop(r_k: float, cfg: SarConfig) -> bool:
    if r_k < 0:
        raise ValueError("residual statistic must be non-negative")
    return r_k * r_k - (cfg.tau * cfg.delta) ** 2 < 0


def rmsr_from_norms(residual_norms: Sequence[float] | np.ndarray) -> float:
    res = np.asarray(residual_norms, dtype=float)
    if res.size == 0:
        raise ValueError("empty ensemble")
    return math.sqrt(float(np.mean(res * res)))


def rmsr_standard_error(residual_norms: np.ndarray) -> float:
    """Standard error of the RMSR estimate (delta method on the mean square)."""
    n = residual_norms.size
    r = rmsr_from_norms(residual_norms)
    if n < 2 or r == 0.0:
        return 0.0
    se_square = float(np.std(residual_norms * residual_norms, ddof=1)) / math.sqrt(n)
    return se_square / (2.0 * r)


@dataclass(frozen=True)
class EnsembleState:
    particles: tuple[GridVector, ...]
    residual_norms: np.ndarray
    step: int
    dt: float
    initial_guess: GridVector
    clip_events: int = 0

    @property
    def time(self) -> float:
        return self.step * self.dt

    @property
    def rmsr(self) -> float:
        return rmsr_from_norms(self.residual_norms)

    @property
    def size(self) -> int:
        return len(self.particles)

    def mean(self) -> GridVector:
        stacked = np.stack([p.values for p in self.particles])
        return GridVector(stacked.mean(axis=0), self.initial_guess.grid)


def _residual_norms(problem: ForwardProblem, particles: Sequence[GridVector], y_delta: GridVector, step: int) -> np.ndarray:
    norms = np.array([problem.residual_norm(x, y_delta) for x in particles])
    bad = np.flatnonzero(~np.isfinite(norms))
    if bad.size:
        raise DivergenceError("non-finite residual", step=step, particle=int(bad[0]))
    return norms


def initial_state(problem: ForwardProblem, y_delta: GridVector, cfg: SarConfig, initial_guess: GridVector) -> EnsembleState:
    particles = (initial_guess,) * cfg.ensemble_size
    res = problem.residual_norm(initial_guess, y_delta)
    if not math.isfinite(res):
        raise DivergenceError("non-finite residual at the initial guess", step=0)
    norms = np.full(cfg.ensemble_size, res)
    norms.flags.writeable = False
    return EnsembleState(particles, norms, 0, cfg.dt, initial_guess)


def ensemble_rmsr(state: EnsembleState, problem: ForwardProblem, y_delta: GridVector) -> float:
    return rmsr_from_norms(_residual_norms(problem, state.particles, y_delta, state.step))


def step(
    state: EnsembleState,
    cfg: SarConfig,
    problem: ForwardProblem,
    y_delta: GridVector,
    executor: Executor | None = None,
) -> EnsembleState:
    grid = problem.param_grid
    f_k = noise_coefficient(state.rmsr, state.time, cfg.theta)
    guard = cfg.divergence_factor * (1.0 + norm(state.initial_guess))
    next_step = state.step + 1

    def advance(i: int) -> tuple[GridVector, float, int]:
        x = state.particles[i]
        values = x.values + cfg.dt * problem.gradient(x, y_delta)
        if f_k != 0.0:
            increment = sample_increment(cfg.cov, cfg.dt, RngStream(cfg.master_seed, i, state.step), grid)
            values = values + f_k * increment.values
        if not np.all(np.isfinite(values)):
            raise DivergenceError("non-finite particle", step=next_step, particle=i)
        values, clipped = problem.project(values)
        if math.sqrt(grid.weight * float(np.dot(values, values))) > guard:
            raise DivergenceError(f"particle norm exceeds {guard:.3g}", step=next_step, particle=i)
        moved = GridVector(values, grid)
        res = problem.residual_norm(moved, y_delta)
        if not math.isfinite(res):
            raise DivergenceError("non-finite residual", step=next_step, particle=i)
        return moved, res, clipped

    indices = range(state.size)
    results = list(executor.map(advance, indices)) if executor is not None else [advance(i) for i in indices]
    clipped = sum(r[2] for r in results)
    if clipped:
        log.debug("step %d: clipped %d parameter values at the positivity floor", next_step, clipped)
    norms = np.array([r[1] for r in results])
    norms.flags.writeable = False
    return EnsembleState(
        particles=tuple(r[0] for r in results),
        residual_norms=norms,
        step=next_step,
        dt=state.dt,
        initial_guess=state.initial_guess,
        clip_events=state.clip_events + clipped,
    )


class Termination(str, Enum):
    STOPPED = "Stopped"
    MAX_STEPS = "MaxSteps"
    PRECONDITION_FAILED = "PreconditionFailed"


@dataclass
class RunRecord:
    times: list[float] = field(default_factory=list)
    rmsr: list[float] = field(default_factory=list)
    rmse: list[float | None] = field(default_factory=list)
    noise_coefficients: list[float] = field(default_factory=list)
    rmsr_stderr: list[float] = field(default_factory=list)
    stop_step: int | None = None
    stop_time: float | None = None
    termination: Termination = Termination.MAX_STEPS
    final: EnsembleState | None = None

    @property
    def steps(self) -> int:
        return len(self.times)

    @property
    def clip_events(self) -> int:
        return self.final.clip_events if self.final is not None else 0

    def record(self, state: EnsembleState, truth: GridVector | None, theta: float) -> None:
        r = state.rmsr
        self.times.append(state.time)
        self.rmsr.append(r)
        self.rmse.append(None if truth is None else math.sqrt(mean_square_distance(state.particles, truth)))
        self.noise_coefficients.append(noise_coefficient(r, state.time, theta))
        self.rmsr_stderr.append(rmsr_standard_error(state.residual_norms))


def run(
    problem: ForwardProblem,
    truth: GridVector | None,
    y_delta: GridVector,
    cfg: SarConfig,
    *,
    initial_guess: GridVector,
) -> RunRecord:
    violations = validate_params(cfg)
    if violations:
        raise ConfigError(violations)
    if cfg.delta > cfg.delta0:
        log.warning(
            "delta = %.6g exceeds delta0 = %.6g; the noise-coefficient bound does not apply", cfg.delta, cfg.delta0
        )

    state = initial_state(problem, y_delta, cfg, initial_guess)
    record = RunRecord()
    record.record(state, truth, cfg.theta)
    if state.rmsr <= cfg.tau * cfg.delta:
        log.warning(
            "initial residual %.6g is not above tau*delta = %.6g; returning the initial guess",
            state.rmsr,
            cfg.tau * cfg.delta,
        )
        record.termination = Termination.PRECONDITION_FAILED
        record.stop_step = 0
        record.stop_time = 0.0
        record.final = state
        return record

    executor = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    try:
        while True:
            if check_stop(state.rmsr, cfg):
                record.termination = Termination.STOPPED
                record.stop_step = state.step
                record.stop_time = state.time
                log.info("discrepancy reached at step %d (t = %.6g), rmsr = %.6g", state.step, state.time, state.rmsr)
                break
            if state.step >= cfg.max_steps:
                record.termination = Termination.MAX_STEPS
                log.info("max_steps = %d reached, rmsr = %.6g", cfg.max_steps, state.rmsr)
                break
            try:
                state = step(state, cfg, problem, y_delta, executor)
            except DivergenceError:
                log.error("flow diverged after step %d", state.step)
                raise
            record.record(state, truth, cfg.theta)
            if cfg.log_every and state.step % cfg.log_every == 0:
                log.info("step %d t=%.6g rmsr=%.6g", state.step, state.time, state.rmsr)
    finally:
        if executor is not None:
            executor.shutdown()
    record.final = state
    return record
