"""
INI configuration for the command line runner.

One section per subcommand ([run], [rates], [sweep], [constants], [check]); keys are
lower_snake_case. Unknown sections and keys are rejected so that a typo in
tau or eps0 cannot silently fall back to a default. Keys missing from the
file take the problem preset's default, then the global default.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError
from .theory import TheoryParams
from .wiener import Basis, CovarianceKind, CovarianceSpec

SECTIONS = ("run", "rates", "sweep", "constants", "check")
PROBLEMS = ("elliptic1d", "elliptic2d", "diagonal", "oscillatory")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in configparser.ConfigParser.BOOLEAN_STATES:
        return configparser.ConfigParser.BOOLEAN_STATES[value]
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    return tuple(float(s) for s in items)


def _int_list(text: str) -> tuple[int, ...]:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    return tuple(int(s) for s in items)


def _optional_int(text: str) -> int | None:
    value = text.strip().lower()
    if value in ("", "none", "all", "0"):
        return None
    return int(value)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "elliptic1d"
    n: int = 200
    noise_level: float = 0.02
    theta: float = 0.1
    ensemble_size: int = 20
    dt: float = 0.0
    tau: float = 1.5
    eps0: float = 1.0
    eta: float = 0.1
    delta0: float = 1.0
    max_steps: int = 100_000
    covariance: str = "identity"
    cov_beta: float = 2.0
    cov_truncation: int | None = None
    cov_basis: str = "cosine"
    seed: int = 20240101
    data_seed: int = 7
    levels: tuple[float, ...] = (0.6, 0.85)
    deltas: tuple[float, ...] = (1e-1, 10**-1.5, 1e-2, 10**-2.5, 1e-3)
    thetas: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2)
    ensemble_sizes: tuple[int, ...] = (10, 50, 100)
    rescale: bool = False
    initial_guess: str = "mean"
    gamma: float = 1.0 / 3.0
    source_bound: float = 3.0
    source_profile: str = "power"
    singular_exponent: float = 1.0
    amplitude: float = 1.5
    truth_value: float = 2.0
    solver: str = "auto"
    clip_floor: float = 1e-6
    log_every: int = 1000
    threads: int = 1

    def __post_init__(self) -> None:
        problems: list[str] = []
        if self.problem not in PROBLEMS:
            problems.append(f"problem = {self.problem!r} is not one of {', '.join(PROBLEMS)}")
        if self.n < 2:
            problems.append(f"n = {self.n} must be >= 2")
        if self.noise_level < 0:
            problems.append(f"noise_level = {self.noise_level} must be non-negative")
        if self.dt < 0:
            problems.append(f"dt = {self.dt} must be non-negative (0 selects the automatic step)")
        if self.solver not in ("auto", "direct", "cg"):
            problems.append(f"solver = {self.solver!r} is not one of auto, direct, cg")
        if self.source_profile not in ("gaussian", "power"):
            problems.append(f"source_profile = {self.source_profile!r} is not one of gaussian, power")
        if any(not 0.0 <= lv < 1.0 for lv in self.levels):
            problems.append(f"levels = {self.levels} must lie in [0, 1)")
        if not self.thetas or any(th < 0 for th in self.thetas):
            problems.append(f"thetas = {self.thetas} must be a non-empty list of non-negative values")
        if not self.ensemble_sizes or any(m < 1 for m in self.ensemble_sizes):
            problems.append(f"ensemble_sizes = {self.ensemble_sizes} must be a non-empty list of positive sizes")
        if self.threads < 0:
            problems.append(f"threads = {self.threads} must be non-negative")
        if self.initial_guess != "mean":
            try:
                float(self.initial_guess)
            except ValueError:
                problems.append(f"initial_guess = {self.initial_guess!r} must be 'mean' or a number")
        try:
            self.covariance_spec()
        except ValueError as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError(problems)

    def covariance_spec(self) -> CovarianceSpec:
        kind = CovarianceKind(self.covariance)
        if kind is CovarianceKind.IDENTITY:
            return CovarianceSpec.identity()
        return CovarianceSpec(kind=kind, beta=self.cov_beta, truncation=self.cov_truncation, basis=Basis(self.cov_basis))

    def describe(self) -> dict[str, Any]:
        out = asdict(self)
        # results do not depend on the worker count
        del out["threads"]
        out["levels"] = list(self.levels)
        out["deltas"] = list(self.deltas)
        out["thetas"] = list(self.thetas)
        out["ensemble_sizes"] = list(self.ensemble_sizes)
        return out


@dataclass(frozen=True)
class CheckConfig:
    samples: int = 1000
    seed: int = 12345
    sup_grid_points: int = 100_000
    t_max: float = 1.0
    long_t_max: float = 1000.0

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ConfigError(f"samples = {self.samples} must be >= 1")
        if self.sup_grid_points < 2:
            raise ConfigError(f"sup_grid_points = {self.sup_grid_points} must be >= 2")
        if not self.t_max > 0 or not self.long_t_max > 0:
            raise ConfigError("t_max and long_t_max must be positive")


# Preset values differ from the global defaults only where the problem needs it.
PRESETS: dict[str, dict[str, Any]] = {
    "elliptic1d": {"n": 1000},
    "elliptic2d": {"n": 128},
    "diagonal": {
        "n": 200,
        "noise_level": 1e-3,
        "theta": 0.01,
        "ensemble_size": 5,
        "dt": 0.25,
        "covariance": "eigen_decay",
        "cov_beta": 2.0,
        "cov_basis": "coordinate",
        "initial_guess": "0",
    },
    "oscillatory": {
        "n": 50,
        "noise_level": 0.01,
        "theta": 0.5,
        "eps0": 5.0,
        "tau": 2.0,
        "dt": 0.05,
        "max_steps": 4000,
        "initial_guess": "0",
    },
}

_PARSERS: dict[type | str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "str": str.strip,
    "bool": _bool,
    "int | None": _optional_int,
    "tuple[float, ...]": _float_list,
    "tuple[int, ...]": _int_list,
}

_EXPERIMENT_KEYS = {f.name: f.type for f in fields(ExperimentConfig)}
_THEORY_KEYS = {f.name: f.type for f in fields(TheoryParams)}
_CHECK_KEYS = {f.name: f.type for f in fields(CheckConfig)}

_SWEEP_ONLY = {"thetas", "ensemble_sizes"}

ALLOWED_KEYS: dict[str, set[str]] = {
    "run": set(_EXPERIMENT_KEYS) - {"deltas"} - _SWEEP_ONLY,
    "rates": set(_EXPERIMENT_KEYS) - {"levels"} - _SWEEP_ONLY,
    "sweep": set(_EXPERIMENT_KEYS) - {"levels", "deltas"},
    "constants": set(_THEORY_KEYS),
    "check": set(_THEORY_KEYS) | set(_CHECK_KEYS),
}


def read_sections(path: Path | None) -> dict[str, dict[str, str]]:
    """Raw key/value strings per section; validates section and key names."""
    if path is None:
        return {}
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep case so that bad keys are reported verbatim
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out: dict[str, dict[str, str]] = {}
    problems: list[str] = []
    for section in parser.sections():
        if section not in SECTIONS:
            problems.append(f"unknown section [{section}] in {path}")
            continue
        for key in parser[section]:
            if key not in ALLOWED_KEYS[section]:
                problems.append(f"unknown key '{key}' in section [{section}]")
        out[section] = dict(parser[section])
    if problems:
        raise ConfigError(problems)
    return out


def _parse(raw: dict[str, str], types: dict[str, Any]) -> dict[str, Any]:
    values: dict[str, Any] = {}
    problems: list[str] = []
    for key, text in raw.items():
        kind = types[key]
        try:
            values[key] = _PARSERS[kind](text)
        except (ValueError, KeyError) as exc:
            problems.append(f"bad value for '{key}': {text!r} ({exc})")
    if problems:
        raise ConfigError(problems)
    return values


def experiment_config(
    sections: dict[str, dict[str, str]], section: str, overrides: dict[str, Any] | None = None
) -> ExperimentConfig:
    raw = sections.get(section, {})
    values = _parse(raw, _EXPERIMENT_KEYS)
    problem = values.get("problem", ExperimentConfig.problem)
    merged = dict(PRESETS.get(problem, {}))
    merged.update(values)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**merged)


def theory_params(sections: dict[str, dict[str, str]], section: str) -> TheoryParams:
    raw = {k: v for k, v in sections.get(section, {}).items() if k in _THEORY_KEYS}
    return TheoryParams(**_parse(raw, _THEORY_KEYS))


def check_config(sections: dict[str, dict[str, str]], overrides: dict[str, Any] | None = None) -> CheckConfig:
    raw = {k: v for k, v in sections.get("check", {}).items() if k in _CHECK_KEYS}
    values = _parse(raw, _CHECK_KEYS)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return CheckConfig(**values)
