"""
Grid functions on uniform 1D/2D grids, their discrete L2 inner product, and
the forward-operator contract every benchmark problem implements.

Norms carry the mesh factor h**dim so that noise levels do not depend on the
grid resolution.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GridMismatchError


@dataclass(frozen=True)
class GridSpec:
    dim: int
    n_per_axis: int
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_per_axis < 2:
            raise ValueError(f"n_per_axis must be >= 2, got {self.n_per_axis}")
        if not self.hi > self.lo:
            raise ValueError(f"need hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n_per_axis - 1)

    @property
    def weight(self) -> float:
        """Quadrature weight of every node."""
        return self.h ** self.dim

    @property
    def size(self) -> int:
        return self.n_per_axis ** self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    def axis(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_per_axis)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis (C order)."""
        ax = self.axis()
        if self.dim == 1:
            return (ax,)
        x1, x2 = np.meshgrid(ax, ax, indexing="ij")
        return (x1.ravel(), x2.ravel())


class GridVector:
    """A real function sampled at the nodes of a grid. Immutable."""

    __slots__ = ("values", "grid")

    def __init__(self, values: np.ndarray | Sequence[float], grid: GridSpec) -> None:
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.size != grid.size:
            raise ValueError(f"expected {grid.size} values for {grid}, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid vector entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "grid", grid)

    def __setattr__(self, name: str, value: object) -> None:
        raise AttributeError("GridVector is immutable")

    @classmethod
    def zeros(cls, grid: GridSpec) -> GridVector:
        return cls(np.zeros(grid.size), grid)

    @classmethod
    def full(cls, grid: GridSpec, value: float) -> GridVector:
        return cls(np.full(grid.size, float(value)), grid)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[..., np.ndarray]) -> GridVector:
        return cls(fn(*grid.coordinates()), grid)

    def _check(self, other: GridVector) -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: GridVector) -> GridVector:
        self._check(other)
        return GridVector(self.values + other.values, self.grid)

    def __sub__(self, other: GridVector) -> GridVector:
        self._check(other)
        return GridVector(self.values - other.values, self.grid)

    def __mul__(self, scalar: float) -> GridVector:
        return GridVector(float(scalar) * self.values, self.grid)

    __rmul__ = __mul__

    def __neg__(self) -> GridVector:
        return GridVector(-self.values, self.grid)

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"GridVector(dim={self.grid.dim}, n={self.grid.n_per_axis}, norm={norm(self):.6g})"


def inner(u: GridVector, v: GridVector) -> float:
    if u.grid != v.grid:
        raise GridMismatchError(f"grid mismatch: {u.grid} vs {v.grid}")
    return u.grid.weight * float(np.dot(u.values, v.values))


def norm(u: GridVector) -> float:
    return math.sqrt(max(inner(u, u), 0.0))


def mean_square_distance(vectors: Iterable[GridVector], target: GridVector) -> float:
    """(1/N) * sum of squared distances to ``target``."""
    total = 0.0
    count = 0
    for v in vectors:
        d = v - target
        total += inner(d, d)
        count += 1
    if count == 0:
        raise ValueError("need at least one vector")
    return total / count


class ForwardProblem(ABC):
    """Operator F with derivative and adjoint, as used by the flow.

    ``derivative_apply`` and ``adjoint_apply`` are adjoint with respect to
    :func:`inner` on ``param_grid`` and ``data_grid``.
    """

    name: str = "problem"

    @property
    @abstractmethod
    def param_grid(self) -> GridSpec: ...

    @property
    def data_grid(self) -> GridSpec:
        return self.param_grid

    @abstractmethod
    def apply(self, c: GridVector) -> GridVector: ...

    @abstractmethod
    def derivative_apply(self, c: GridVector, q: GridVector) -> GridVector: ...

    @abstractmethod
    def adjoint_apply(self, c: GridVector, omega: GridVector) -> GridVector: ...

    def gradient(self, c: GridVector, y: GridVector) -> np.ndarray:
        """F'(c)*(y - F(c)) as a raw array; problems may share solves here."""
        return self.adjoint_apply(c, y - self.apply(c)).values

    def residual_norm(self, c: GridVector, y: GridVector) -> float:
        return norm(self.apply(c) - y)

    def is_admissible(self, values: np.ndarray) -> bool:
        return True

    def project(self, values: np.ndarray) -> tuple[np.ndarray, int]:
        """Map raw iterate values back into the domain; returns (values, clip count)."""
        return values, 0
