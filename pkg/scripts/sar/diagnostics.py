"""Error metrics, bias-variance split, pointwise confidence bands and rate regression."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .core import ForwardProblem, GridVector, inner, mean_square_distance
from .errors import GridMismatchError
from .flow import EnsembleState, RunRecord, ensemble_rmsr


@dataclass(frozen=True)
class ErrorSeries:
    times: np.ndarray
    rmse: np.ndarray
    rmsr: np.ndarray
    stop_step: int | None

    @classmethod
    def from_record(cls, record: RunRecord) -> ErrorSeries:
        rmse = np.array([math.nan if e is None else e for e in record.rmse])
        return cls(np.array(record.times), rmse, np.array(record.rmsr), record.stop_step)

    def __len__(self) -> int:
        return self.times.size


def _stack(ensemble: Sequence[GridVector]) -> np.ndarray:
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    grid = ensemble[0].grid
    if any(p.grid != grid for p in ensemble):
        raise GridMismatchError("ensemble members live on different grids")
    return np.stack([p.values for p in ensemble])


def rmse(ensemble: Sequence[GridVector], x_true: GridVector) -> float:
    return math.sqrt(mean_square_distance(ensemble, x_true))


def rmsr(state: EnsembleState, problem: ForwardProblem, y_delta: GridVector) -> float:
    return ensemble_rmsr(state, problem, y_delta)


@dataclass(frozen=True)
class BiasVariance:
    bias_sq: float
    variance: float
    total: float


def bias_variance(ensemble: Sequence[GridVector], x_true: GridVector) -> BiasVariance:
    """Plug-in split with divisor N, so total == bias_sq + variance up to rounding."""
    values = _stack(ensemble)
    if x_true.grid != ensemble[0].grid:
        raise GridMismatchError("truth and ensemble live on different grids")
    mean = GridVector(values.mean(axis=0), x_true.grid)
    bias = mean - x_true
    variance = mean_square_distance(ensemble, mean)
    total = mean_square_distance(ensemble, x_true)
    return BiasVariance(inner(bias, bias), variance, total)


@dataclass(frozen=True)
class ConfidenceBand:
    level: float
    lower: GridVector
    mean: GridVector
    upper: GridVector

    @property
    def width(self) -> np.ndarray:
        return self.upper.values - self.lower.values


def confidence_band(ensemble: Sequence[GridVector], level: float) -> ConfidenceBand:
    """Per-node empirical quantiles at (1-level)/2 and (1+level)/2, linear interpolation."""
    if len(ensemble) < 2:
        raise ValueError("a confidence band needs at least two particles")
    if not 0.0 <= level < 1.0:
        raise ValueError(f"level must lie in [0, 1), got {level}")
    values = _stack(ensemble)
    grid = ensemble[0].grid
    lower, upper = np.quantile(values, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0, method="linear")
    return ConfidenceBand(
        level=level,
        lower=GridVector(lower, grid),
        mean=GridVector(values.mean(axis=0), grid),
        upper=GridVector(upper, grid),
    )


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float


def rate_fit(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least squares of log(err) on log(delta)."""
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValueError("rate_fit needs at least three (delta, err) pairs")
    if np.any(data <= 0):
        raise ValueError("deltas and errors must be positive")
    x = np.log(data[:, 0])
    y = np.log(data[:, 1])
    if np.ptp(x) == 0.0:
        raise ValueError("deltas must not all be equal")
    fit = stats.linregress(x, y)
    # linregress reports r = 0 for constant errors; a flat line fits them exactly
    r_squared = 1.0 if np.ptp(y) == 0.0 else float(fit.rvalue) ** 2
    return RateFit(float(fit.slope), float(fit.intercept), r_squared)
