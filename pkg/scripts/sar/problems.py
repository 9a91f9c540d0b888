"""
Benchmark forward operators.

- EllipticProblem: c -> u(c) for -Laplace(u) + c*u = w on [-1, 1]^d with
  homogeneous Neumann conditions, full-field observation.
- DiagonalProblem: x -> s * x with a known spectrum, for source conditions
  and rate studies.
- OscillatoryProblem: x -> x + a/(2 pi) sin(2 pi x) nodewise; for a > 1 the
  misfit has spurious local minima.

Plus noisy-data synthesis, source-case construction and the closed-form
solution of the linear noise-free flow.

Discretization of A(c) = -Laplace + c: the mirrored (ghost node) Neumann
stencil M is not symmetric, but with trapezoid weights W the matrix
S = W M is. Every solve is therefore done with the SPD matrix
B(c) = S + W diag(c), using A(c)^-1 r = B(c)^-1 (W r).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ForwardProblem, GridSpec, GridVector, inner, norm
from .errors import GridMismatchError, SolverError

log = logging.getLogger(__name__)

SolverName = Literal["auto", "direct", "cg"]

CG_RTOL = 1e-12


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _stiffness_1d(n: int, h: float) -> sp.csr_matrix:
    """S = W M for the mirrored 1D Neumann stencil (symmetric)."""
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(n - 1, -1.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / (h * h)


def node_weights(grid: GridSpec) -> np.ndarray:
    """Diagonal of W (trapezoid weights without the mesh factor), flattened."""
    w = _trapezoid_weights(grid.n_per_axis)
    if grid.dim == 1:
        return w
    return np.outer(w, w).ravel()


def stiffness_matrix(grid: GridSpec) -> sp.csr_matrix:
    s1 = _stiffness_1d(grid.n_per_axis, grid.h)
    if grid.dim == 1:
        return s1
    w1 = sp.diags(_trapezoid_weights(grid.n_per_axis))
    return (sp.kron(s1, w1) + sp.kron(w1, s1)).tocsr()


class _SpdSystem:
    """B(c) factored (1D banded Cholesky, 2D sparse LU) or handed to CG."""

    def __init__(self, c: np.ndarray, grid: GridSpec, solver: SolverName = "auto") -> None:
        if np.any(c <= 0):
            raise SolverError(f"coefficient must be positive everywhere, min is {float(np.min(c))}")
        self.grid = grid
        self.weights = node_weights(grid)
        self._solver = solver
        if grid.dim == 1 and solver in ("auto", "direct"):
            h2 = grid.h * grid.h
            ab = np.empty((2, grid.size))
            ab[0, 0] = 0.0
            ab[0, 1:] = -1.0 / h2
            ab[1, :] = 2.0 / h2 + c
            ab[1, 0] = 1.0 / h2 + 0.5 * c[0]
            ab[1, -1] = 1.0 / h2 + 0.5 * c[-1]
            try:
                self._banded = scipy.linalg.cholesky_banded(ab, lower=False)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"banded Cholesky failed: {exc}") from exc
            self._mode = "banded"
            return
        matrix = stiffness_matrix(grid) + sp.diags(self.weights * c)
        if solver == "direct":
            try:
                self._lu = spla.splu(matrix.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"sparse LU failed: {exc}") from exc
            self._mode = "lu"
        else:
            self._matrix = matrix.tocsr()
            self._precond = sp.diags(1.0 / matrix.diagonal())
            self._mode = "cg"

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._mode == "banded":
            x = scipy.linalg.cho_solve_banded((self._banded, False), b)
        elif self._mode == "lu":
            x = self._lu.solve(b)
        else:
            x, info = spla.cg(
                self._matrix, b, rtol=CG_RTOL, atol=0.0, maxiter=20 * self.grid.size, M=self._precond
            )
            if info != 0:
                raise SolverError(f"conjugate gradient did not converge (info={info})")
        if not np.all(np.isfinite(x)):
            raise SolverError("solver returned non-finite values")
        return x


def assemble_and_solve(
    c: GridVector, rhs: GridVector, grid: GridSpec, solver: SolverName = "auto"
) -> GridVector:
    """Solve A(c) u = rhs with the mirrored Neumann stencil."""
    if c.grid != grid or rhs.grid != grid:
        raise GridMismatchError("c, rhs and grid must agree")
    system = _SpdSystem(c.values, grid, solver)
    return GridVector(system.solve(system.weights * rhs.values), grid)


def apply_elliptic_operator(c: GridVector, u: GridVector) -> GridVector:
    """A(c) u, the operator :func:`assemble_and_solve` inverts."""
    if c.grid != u.grid:
        raise GridMismatchError("c and u must share a grid")
    grid = u.grid
    su = stiffness_matrix(grid) @ u.values
    return GridVector(su / node_weights(grid) + c.values * u.values, grid)


class EllipticProblem(ForwardProblem):
    """F(c) = rho * u(c) where A(c) u = w."""

    def __init__(
        self,
        grid: GridSpec,
        source: GridVector | None = None,
        scale: float = 1.0,
        floor: float = 1e-6,
        solver: SolverName = "auto",
    ) -> None:
        if source is not None and source.grid != grid:
            raise GridMismatchError("source term must live on the problem grid")
        if not scale > 0:
            raise ValueError(f"scale must be positive, got {scale}")
        self.grid = grid
        self.source = source if source is not None else GridVector.full(grid, 1.0)
        self.scale = float(scale)
        self.floor = float(floor)
        self.solver = solver
        self.name = f"elliptic{grid.dim}d"
        self._weighted_source = node_weights(grid) * self.source.values

    @property
    def param_grid(self) -> GridSpec:
        return self.grid

    def with_scale(self, scale: float) -> EllipticProblem:
        return EllipticProblem(self.grid, self.source, scale, self.floor, self.solver)

    def _state(self, c: GridVector) -> tuple[_SpdSystem, np.ndarray]:
        if c.grid != self.grid:
            raise GridMismatchError("parameter is not on the problem grid")
        system = _SpdSystem(c.values, self.grid, self.solver)
        return system, system.solve(self._weighted_source)

    def _adjoint(self, system: _SpdSystem, u: np.ndarray, omega: np.ndarray) -> np.ndarray:
        z = system.solve(omega)
        return -self.scale * (u * (system.weights * z))

    def apply(self, c: GridVector) -> GridVector:
        _, u = self._state(c)
        return GridVector(self.scale * u, self.grid)

    def derivative_apply(self, c: GridVector, q: GridVector) -> GridVector:
        system, u = self._state(c)
        v = system.solve(-(system.weights * (q.values * u)))
        return GridVector(self.scale * v, self.grid)

    def adjoint_apply(self, c: GridVector, omega: GridVector) -> GridVector:
        system, u = self._state(c)
        return GridVector(self._adjoint(system, u, omega.values), self.grid)

    def gradient(self, c: GridVector, y: GridVector) -> np.ndarray:
        # one factorization for both solves
        system, u = self._state(c)
        omega = y.values - self.scale * u
        return self._adjoint(system, u, omega)

    def is_admissible(self, values: np.ndarray) -> bool:
        return bool(np.all(values > 0))

    def project(self, values: np.ndarray) -> tuple[np.ndarray, int]:
        clipped = int(np.count_nonzero(values < self.floor))
        if clipped == 0:
            return values, 0
        return np.maximum(values, self.floor), clipped


def true_parameter(case: str, grid: GridSpec) -> GridVector:
    if case == "1d":
        if grid.dim != 1:
            raise GridMismatchError("case '1d' needs a 1D grid")
        return GridVector.from_function(grid, lambda x: 2.0 + np.cos(np.pi * x))
    if case == "2d":
        if grid.dim != 2:
            raise GridMismatchError("case '2d' needs a 2D grid")
        return GridVector.from_function(grid, lambda x1, x2: 1.0 + np.sin(np.pi * x1) + np.cos(x2))
    raise ValueError(f"unknown case {case!r}, expected '1d' or '2d'")


def mean_initial_guess(c_true: GridVector) -> GridVector:
    """Constant function equal to the node mean of the true parameter."""
    return GridVector.full(c_true.grid, float(np.mean(c_true.values)))


def synthesize_data(u: GridVector, delta: float, rng: np.random.Generator) -> GridVector:
    """u_j + delta * max|u| * xi_j with xi_j i.i.d. standard normal."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        return u
    amplitude = delta * float(np.max(np.abs(u.values)))
    return GridVector(u.values + amplitude * rng.standard_normal(u.values.size), u.grid)


def synthesize_data_at_level(y: GridVector, delta: float, rng: np.random.Generator) -> GridVector:
    """y + eta with a Gaussian direction eta scaled to norm(eta) == delta."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        return y
    xi = GridVector(rng.standard_normal(y.values.size), y.grid)
    return y + (delta / norm(xi)) * xi


def operator_norm_estimate(
    problem: ForwardProblem,
    c: GridVector,
    iterations: int = 200,
    tol: float = 1e-10,
    seed: int = 0,
) -> float:
    """Power iteration on F'(c)* F'(c); returns an estimate of norm(F'(c))."""
    rng = np.random.default_rng(seed)
    v = GridVector(rng.standard_normal(c.values.size), c.grid)
    v = (1.0 / norm(v)) * v
    previous = 1.0
    value = 0.0
    for _ in range(iterations):
        w = problem.adjoint_apply(c, problem.derivative_apply(c, v))
        value = norm(w)
        if value == 0.0:
            return 0.0
        if abs(value - previous) <= tol * previous:
            break
        previous = value
        v = (1.0 / value) * w
    return math.sqrt(value)


class DiagonalProblem(ForwardProblem):
    """F(x) = s * x on a unit-spaced grid, so the inner product is Euclidean."""

    name = "diagonal"

    def __init__(self, singular_values: np.ndarray) -> None:
        s = np.asarray(singular_values, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("need at least two singular values")
        if np.any(s <= 0) or np.any(s > 1):
            raise ValueError("singular values must lie in (0, 1]")
        if np.any(np.diff(s) > 0):
            raise ValueError("singular values must be non-increasing")
        s.flags.writeable = False
        self.spectrum = s
        self.grid = GridSpec(1, s.size, 0.0, float(s.size - 1))

    @classmethod
    def power_law(cls, n: int, exponent: float = 1.0) -> DiagonalProblem:
        return cls(np.arange(1, n + 1, dtype=float) ** (-exponent))

    @property
    def param_grid(self) -> GridSpec:
        return self.grid

    def apply(self, c: GridVector) -> GridVector:
        return GridVector(self.spectrum * c.values, self.grid)

    def derivative_apply(self, c: GridVector, q: GridVector) -> GridVector:
        return GridVector(self.spectrum * q.values, self.grid)

    def adjoint_apply(self, c: GridVector, omega: GridVector) -> GridVector:
        return GridVector(self.spectrum * omega.values, self.grid)


class OscillatoryProblem(ForwardProblem):
    """F(x)_i = x_i + a/(2 pi) sin(2 pi x_i); self-adjoint diagonal derivative."""

    name = "oscillatory"

    def __init__(self, grid: GridSpec, amplitude: float = 1.5) -> None:
        if grid.dim != 1:
            raise GridMismatchError("the oscillatory problem is one-dimensional")
        self.grid = grid
        self.amplitude = float(amplitude)

    @property
    def param_grid(self) -> GridSpec:
        return self.grid

    def _slope(self, c: GridVector) -> np.ndarray:
        return 1.0 + self.amplitude * np.cos(2.0 * np.pi * c.values)

    def apply(self, c: GridVector) -> GridVector:
        x = c.values
        return GridVector(x + self.amplitude / (2.0 * np.pi) * np.sin(2.0 * np.pi * x), self.grid)

    def derivative_apply(self, c: GridVector, q: GridVector) -> GridVector:
        return GridVector(self._slope(c) * q.values, self.grid)

    def adjoint_apply(self, c: GridVector, omega: GridVector) -> GridVector:
        return GridVector(self._slope(c) * omega.values, self.grid)


@dataclass(frozen=True)
class SourceCase:
    gamma: float
    bound: float
    nu: GridVector
    x_true: GridVector
    initial_guess: GridVector

    @property
    def offset(self) -> GridVector:
        """x_bar - x_true, equal to V**gamma nu."""
        return self.initial_guess - self.x_true


def make_source_case(
    gamma: float,
    bound: float,
    problem: DiagonalProblem,
    rng: np.random.Generator | None = None,
    profile: Literal["gaussian", "power"] = "gaussian",
    nu: GridVector | None = None,
    initial_guess: GridVector | None = None,
) -> SourceCase:
    """Build x_true with x_bar - x_true = V**gamma nu, norm(nu) == bound."""
    if not 0.0 < gamma <= 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2], got {gamma}")
    if not bound > 0:
        raise ValueError(f"source bound must be positive, got {bound}")
    grid = problem.param_grid
    if nu is None:
        if profile == "gaussian":
            if rng is None:
                raise ValueError("a random generator is needed for the gaussian profile")
            direction = GridVector(rng.standard_normal(grid.size), grid)
        elif profile == "power":
            direction = GridVector(np.arange(1, grid.size + 1, dtype=float) ** -0.5, grid)
        else:
            raise ValueError(f"unknown source profile {profile!r}")
        nu = (bound / norm(direction)) * direction
    elif norm(nu) > bound * (1.0 + 1e-12):
        raise ValueError(f"norm(nu) = {norm(nu)} exceeds the bound {bound}")
    x_bar = initial_guess if initial_guess is not None else GridVector.zeros(grid)
    offset = GridVector(problem.spectrum ** (2.0 * gamma) * nu.values, grid)
    return SourceCase(gamma, bound, nu, x_bar - offset, x_bar)


def linear_flow_closed_form(
    problem: DiagonalProblem,
    case: SourceCase,
    y_exact: GridVector,
    y_delta: GridVector,
    t: float,
) -> GridVector:
    """x(t) of the noise-free flow on the diagonal problem, mode by mode."""
    if t < 0:
        raise ValueError("t must be non-negative")
    s = problem.spectrum
    decay = np.exp(-(s * s) * t)
    error0 = (case.initial_guess - case.x_true).values
    eta = (y_delta - y_exact).values
    error_t = decay * error0 + (-np.expm1(-(s * s) * t)) / s * eta
    return GridVector(case.x_true.values + error_t, problem.param_grid)


def adjoint_mismatch(problem: ForwardProblem, c: GridVector, q: GridVector, omega: GridVector) -> float:
    """|<F'(c)q, omega> - <q, F'(c)* omega>| for the dot-product test."""
    return abs(inner(problem.derivative_apply(c, q), omega) - inner(q, problem.adjoint_apply(c, omega)))
