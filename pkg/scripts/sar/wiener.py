"""
Increments of the Q-Wiener process driving the flow.

An increment is sqrt(dt) * sum_j sqrt(lambda_j) * phi_j * xi_j, truncated to
J modes. The basis phi_j is either the coordinate basis or the orthonormal
DCT-II cosine basis (smooth modes with zero normal slope at the boundary),
applied with scipy.fft so no basis matrix is formed.

Random numbers come from Philox streams keyed by (seed, particle) with the
step index in the counter, so a draw does not depend on which thread or in
which order particles are advanced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import fft

from .core import GridSpec, GridVector

_MASK64 = (1 << 64) - 1


class CovarianceKind(str, Enum):
    IDENTITY = "identity"
    EIGEN_DECAY = "eigen_decay"


class Basis(str, Enum):
    COSINE = "cosine"
    COORDINATE = "coordinate"


@dataclass(frozen=True)
class CovarianceSpec:
    kind: CovarianceKind = CovarianceKind.IDENTITY
    beta: float = 2.0
    truncation: int | None = None
    basis: Basis = Basis.COSINE

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CovarianceKind(self.kind))
        object.__setattr__(self, "basis", Basis(self.basis))
        if self.kind is CovarianceKind.EIGEN_DECAY and not self.beta > 1.0:
            raise ValueError(f"eigen decay needs beta > 1 for a trace-class covariance, got {self.beta}")
        if self.truncation is not None and self.truncation < 1:
            raise ValueError(f"truncation must be >= 1, got {self.truncation}")

    @classmethod
    def identity(cls) -> CovarianceSpec:
        return cls(kind=CovarianceKind.IDENTITY, basis=Basis.COORDINATE)

    def modes(self, grid: GridSpec) -> int:
        if self.kind is CovarianceKind.IDENTITY:
            return grid.size
        j = grid.size if self.truncation is None else self.truncation
        if j > grid.size:
            raise ValueError(f"truncation {j} exceeds the {grid.size} grid nodes")
        return j

    def eigenvalues(self, grid: GridSpec) -> np.ndarray:
        j = self.modes(grid)
        if self.kind is CovarianceKind.IDENTITY:
            return np.ones(j)
        return np.arange(1, j + 1, dtype=float) ** (-self.beta)

    def trace(self, grid: GridSpec) -> float:
        return float(np.sum(self.eigenvalues(grid)))

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "beta": self.beta,
            "truncation": self.truncation,
            "basis": self.basis.value,
        }


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream for one (particle, step) pair under a master seed."""

    seed: int
    particle: int = 0
    step: int = 0

    def generator(self) -> np.random.Generator:
        if self.particle < 0 or self.step < 0:
            raise ValueError("stream ids must be non-negative")
        key = (self.seed & _MASK64) | (self.particle << 64)
        return np.random.Generator(np.random.Philox(key=key, counter=self.step << 128))


def expected_energy(cov: CovarianceSpec, dt: float, grid: GridSpec) -> float:
    """E ||dB||^2 measured in the coordinate (Euclidean) sense: dt * trace."""
    return dt * cov.trace(grid)


def _cosine_mode_order(grid: GridSpec) -> np.ndarray:
    """Flat DCT coefficient indices sorted by Laplacian eigenvalue."""
    if grid.dim == 1:
        return np.arange(grid.size)
    k = np.arange(grid.n_per_axis)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    k1 = k1.ravel()
    k2 = k2.ravel()
    # lexsort keys: last one is primary
    return np.lexsort((k2, k1, k1 * k1 + k2 * k2))


def _synthesize(cov: CovarianceSpec, coefficients: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Map mode coefficients (..., J) onto node values (..., size)."""
    j = coefficients.shape[-1]
    lead = coefficients.shape[:-1]
    full = np.zeros(lead + (grid.size,))
    if cov.basis is Basis.COORDINATE or cov.kind is CovarianceKind.IDENTITY:
        full[..., :j] = coefficients
        return full
    order = _cosine_mode_order(grid)
    full[..., order[:j]] = coefficients
    if grid.dim == 1:
        return fft.idct(full, type=2, norm="ortho", axis=-1)
    shaped = full.reshape(lead + grid.shape)
    values = fft.idctn(shaped, type=2, norm="ortho", axes=(-2, -1))
    return values.reshape(lead + (grid.size,))


def sample_increment(cov: CovarianceSpec, dt: float, rng: RngStream, grid: GridSpec) -> GridVector:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = cov.eigenvalues(grid)
    xi = rng.generator().standard_normal(lam.size)
    coefficients = math.sqrt(dt) * np.sqrt(lam) * xi
    return GridVector(_synthesize(cov, coefficients, grid), grid)


def draw_increments(
    cov: CovarianceSpec, dt: float, generator: np.random.Generator, grid: GridSpec, size: int
) -> np.ndarray:
    """``size`` independent increments as rows of an array, for Monte-Carlo work."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    lam = cov.eigenvalues(grid)
    xi = generator.standard_normal((size, lam.size))
    return _synthesize(cov, math.sqrt(dt) * np.sqrt(lam) * xi, grid)
