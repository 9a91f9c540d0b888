import pytest

from sar.config import (
    PRESETS,
    CheckConfig,
    ExperimentConfig,
    check_config,
    experiment_config,
    read_sections,
    theory_params,
)
from sar.errors import ConfigError
from sar.wiener import Basis, CovarianceKind


def test_defaults_are_valid():
    cfg = ExperimentConfig()
    assert cfg.problem == "elliptic1d"
    assert cfg.covariance_spec().kind is CovarianceKind.IDENTITY


def test_missing_file_returns_no_sections():
    assert read_sections(None) == {}


def test_missing_path_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        read_sections(tmp_path / "nope.ini")


def test_unknown_key_and_section_are_rejected(write_ini):
    path = write_ini(
        """
        [run]
        tua = 2.0

        [extra]
        x = 1
        """
    )
    with pytest.raises(ConfigError) as info:
        read_sections(path)
    text = "\n".join(info.value.violations)
    assert "unknown key 'tua' in section [run]" in text
    assert "unknown section [extra]" in text


def test_deltas_not_allowed_in_run_section(write_ini):
    path = write_ini(
        """
        [run]
        deltas = 0.1, 0.01
        """
    )
    with pytest.raises(ConfigError):
        read_sections(path)


def test_preset_then_file_then_overrides(write_ini):
    path = write_ini(
        """
        [run]
        problem = diagonal
        theta = 0.02
        seed = 3
        """
    )
    cfg = experiment_config(read_sections(path), "run", {"seed": 99, "threads": None})
    assert cfg.dt == PRESETS["diagonal"]["dt"]
    assert cfg.covariance_spec().basis is Basis.COORDINATE
    assert cfg.theta == 0.02
    assert cfg.seed == 99
    assert cfg.threads == 1


def test_value_parsing(write_ini):
    path = write_ini(
        """
        [rates]
        deltas = 0.1; 0.01, 0.001
        rescale = yes
        cov_truncation = none
        n = 64
        """
    )
    cfg = experiment_config(read_sections(path), "rates")
    assert cfg.deltas == (0.1, 0.01, 0.001)
    assert cfg.rescale is True
    assert cfg.cov_truncation is None
    assert cfg.n == 64


def test_bad_value_is_reported(write_ini):
    path = write_ini(
        """
        [run]
        n = many
        rescale = perhaps
        """
    )
    with pytest.raises(ConfigError) as info:
        experiment_config(read_sections(path), "run")
    assert len(info.value.violations) == 2


@pytest.mark.parametrize(
    "kwargs",
    [
        {"problem": "heat"},
        {"n": 1},
        {"noise_level": -0.1},
        {"levels": (0.5, 1.0)},
        {"solver": "gmres"},
        {"initial_guess": "zero"},
        {"covariance": "eigen_decay", "cov_beta": 0.5},
        {"covariance": "matern"},
    ],
)
def test_invalid_experiment_values(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_theory_and_check_sections(write_ini):
    path = write_ini(
        """
        [check]
        tau = 7
        samples = 10
        """
    )
    sections = read_sections(path)
    assert theory_params(sections, "check").tau == 7.0
    assert check_config(sections, {"seed": 5}) == CheckConfig(samples=10, seed=5)
    with pytest.raises(ConfigError):
        CheckConfig(samples=0)


def test_shipped_configs_parse(repo_root):
    for path in sorted((repo_root / "configs").glob("*.ini")):
        sections = read_sections(path)
        for section in ("run", "rates", "sweep"):
            if section in sections:
                experiment_config(sections, section)
        for section in ("constants", "check"):
            if section in sections:
                theory_params(sections, section)
        check_config(sections)


def test_sweep_section(write_ini):
    path = write_ini(
        """
        [sweep]
        problem = oscillatory
        thetas = 0, 0.25; 0.5
        ensemble_sizes = 10, 40
        """
    )
    cfg = experiment_config(read_sections(path), "sweep")
    assert cfg.thetas == (0.0, 0.25, 0.5)
    assert cfg.ensemble_sizes == (10, 40)
    assert cfg.describe()["ensemble_sizes"] == [10, 40]


def test_sweep_lists_only_in_sweep_section(write_ini):
    path = write_ini("[run]\nthetas = 0.1\n")
    with pytest.raises(ConfigError):
        read_sections(path)


@pytest.mark.parametrize("field,value", [("thetas", ()), ("thetas", (0.1, -0.1)), ("ensemble_sizes", (0,))])
def test_bad_sweep_lists(field, value):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{field: value})
