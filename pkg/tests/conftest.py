from __future__ import annotations

import textwrap
from pathlib import Path

import numpy as np
import pytest

from sar.core import GridSpec, GridVector
from sar.problems import DiagonalProblem, EllipticProblem, true_parameter

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def repo_root() -> Path:
    return ROOT


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)


@pytest.fixture
def grid1d() -> GridSpec:
    return GridSpec(1, 101)


@pytest.fixture
def elliptic1d() -> EllipticProblem:
    return EllipticProblem(GridSpec(1, 50))


@pytest.fixture
def truth1d(elliptic1d: EllipticProblem) -> GridVector:
    return true_parameter("1d", elliptic1d.param_grid)


@pytest.fixture
def diagonal() -> DiagonalProblem:
    return DiagonalProblem.power_law(20)


@pytest.fixture
def write_ini(tmp_path: Path):
    """Write an INI file from an indented block and return its path."""

    def _write(text: str, name: str = "test.ini") -> Path:
        path = tmp_path / name
        path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
        return path

    return _write
