"""Exception hierarchy shared by the library and the command line runner."""
from __future__ import annotations


class SarError(Exception):
    """Base class for every error raised on purpose by this package."""


class ConfigError(SarError):
    """Invalid parameters or config file contents.

    ``violations`` holds one human readable line per failed constraint.
    """

    def __init__(self, violations: list[str] | str) -> None:
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class GridMismatchError(SarError, ValueError):
    """Two grid functions live on different grids."""


class SolverError(SarError):
    """The elliptic system could not be assembled or solved."""


class DivergenceError(SarError):
    """A particle became non-finite or left the divergence guard."""

    def __init__(self, message: str, step: int, particle: int | None = None) -> None:
        self.step = step
        self.particle = particle
        where = f"step {step}" if particle is None else f"step {step}, particle {particle}"
        super().__init__(f"{message} ({where})")


class ChainNotClosedError(SarError):
    """The constants chain needs c1 < 1 and the parameters do not give it."""
