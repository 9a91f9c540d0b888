import json
import math

import numpy as np
import pytest

from sar import experiments, flow
from sar.config import ExperimentConfig, experiment_config
from sar.core import norm
from sar.errors import ConfigError
from sar.problems import EllipticProblem


def _config(problem: str, **overrides) -> ExperimentConfig:
    return experiment_config({"run": {"problem": problem}}, "run", {"log_every": 0, **overrides})


def test_fmt_keeps_full_precision():
    assert experiments.fmt(0.1) == "0.10000000000000001"
    assert experiments.fmt(np.int64(7)) == "7"
    assert experiments.fmt(None) == ""
    assert float(experiments.fmt(math.pi)) == math.pi


def test_write_json_is_sorted_and_plain(tmp_path):
    path = tmp_path / "out.json"
    experiments.write_json(path, {"b": np.float64(1.5), "a": [math.inf, 2]})
    text = path.read_text(encoding="utf-8")
    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [None, 2], "b": 1.5}


def test_elliptic_setup_noise_level():
    cfg = _config("elliptic1d", n=200)
    setup = experiments.build_setup(cfg)
    assert isinstance(setup.problem, EllipticProblem)
    u_max = float(np.max(np.abs(setup.y_exact.values)))
    grid = setup.problem.param_grid
    assert setup.delta_abs == pytest.approx(0.02 * u_max * math.sqrt(grid.weight * grid.size))
    # the realised perturbation is close to its expected norm
    assert norm(setup.y_delta - setup.y_exact) == pytest.approx(setup.delta_abs, rel=0.2)
    np.testing.assert_allclose(setup.initial_guess.values, np.mean(setup.truth.values))


def test_rescaled_setup_has_unit_operator_norm():
    cfg = _config("elliptic1d", n=100, rescale=True)
    setup = experiments.build_setup(cfg)
    assert setup.scale != 1.0
    sar, auto = experiments.sar_config(cfg, setup)
    assert auto
    # dt = 0.5 / norm(F'(x_bar))**2, and the norm is close to one at the truth
    assert 0.1 < sar.dt < 5.0


def test_diagonal_setup_has_exact_noise_level():
    cfg = _config("diagonal")
    setup = experiments.build_setup(cfg, noise_level=1e-2, data_seed=3)
    assert norm(setup.y_delta - setup.y_exact) == pytest.approx(1e-2, rel=1e-12)
    assert setup.delta_abs == 1e-2
    np.testing.assert_array_equal(setup.initial_guess.values, 0.0)


def test_noise_lets_particles_escape_local_minimum(tmp_path):
    plain = experiments.cmd_run(_config("oscillatory", theta=0.0, max_steps=500), tmp_path / "plain")
    noisy = experiments.cmd_run(_config("oscillatory", theta=0.5, max_steps=500), tmp_path / "noisy")
    assert plain["termination"] == "MaxSteps"
    assert plain["final_rmse"] == pytest.approx(1.65, abs=0.1)
    assert noisy["final_rmse"] < plain["final_rmse"] - 0.3


def test_run_outputs(tmp_path):
    summary = experiments.cmd_run(_config("oscillatory", n=20, ensemble_size=4, max_steps=50), tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["band_0.6.csv", "band_0.85.csv", "mean.csv", "summary.json", "trajectory.csv"]
    header = (tmp_path / "trajectory.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "step,t,rmsr,rmse,f_k"
    assert summary["band_files"] == ["band_0.6.csv", "band_0.85.csv"]
    assert summary["bias_sq"] + summary["variance"] == pytest.approx(summary["final_rmse"] ** 2, rel=1e-9)


def test_rates_need_three_levels(tmp_path):
    cfg = _config("diagonal", deltas=(0.1, 0.01))
    with pytest.raises(ConfigError):
        experiments.cmd_rates(cfg, tmp_path)


def test_fit_rates_reports_theory_exponent():
    rows = [experiments.RateRow(d, 10, d**0.4) for d in (1e-1, 1e-2, 1e-3)]
    fit = experiments.fit_rates(rows, gamma=1.0 / 3.0)
    assert fit["slope"] == pytest.approx(0.4, rel=1e-12)
    assert fit["theoretical_exponent"] == pytest.approx(0.4)


ELLIPTIC_THETAS = (0.0, 0.1, 0.3)


def _elliptic_run(theta: float) -> flow.RunRecord:
    cfg = _config(
        "elliptic1d", n=200, theta=theta, ensemble_size=100, covariance="eigen_decay", max_steps=5000
    )
    setup = experiments.build_setup(cfg)
    sar, _ = experiments.sar_config(cfg, setup)
    return flow.run(setup.problem, setup.truth, setup.y_delta, sar, initial_guess=setup.initial_guess)


@pytest.fixture(scope="module")
def elliptic_runs() -> dict[float, flow.RunRecord]:
    return {theta: _elliptic_run(theta) for theta in ELLIPTIC_THETAS}


@pytest.mark.parametrize("theta", [0.0, 0.1])
def test_elliptic_ensemble_stops_at_discrepancy(elliptic_runs, theta):
    record = elliptic_runs[theta]
    assert record.termination is flow.Termination.STOPPED
    assert record.final.size == 100
    assert record.rmse[-1] < record.rmse[0]


def test_deterministic_rmsr_never_increases(elliptic_runs):
    r = np.array(elliptic_runs[0.0].rmsr)
    assert np.all(np.diff(r) <= 1e-12 * r[:-1])


def test_ensemble_rmsr_decreases_within_standard_errors(elliptic_runs):
    record = elliptic_runs[0.1]
    r = np.array(record.rmsr)
    se = np.array(record.rmsr_stderr)
    assert np.all(se[1:] > 0.0)
    rise = np.diff(r)
    assert np.all(rise <= 3.0 * np.hypot(se[:-1], se[1:]))


def test_more_randomization_costs_accuracy(elliptic_runs):
    final = {theta: elliptic_runs[theta].rmse[-1] for theta in ELLIPTIC_THETAS}
    assert final[0.3] > final[0.1]
    assert final[0.3] > final[0.0]


def test_sweep_rows_and_outputs(tmp_path):
    cfg = _config(
        "elliptic1d",
        n=100,
        covariance="eigen_decay",
        thetas=(0.0, 0.2),
        ensemble_sizes=(5, 20),
        max_steps=5000,
    )
    rows = experiments.cmd_sweep(cfg, tmp_path)
    assert [(r.theta, r.ensemble_size) for r in rows] == [(0.0, 5), (0.0, 20), (0.2, 5), (0.2, 20)]
    assert all(r.termination == "Stopped" for r in rows)
    # without noise every particle follows the same path, whatever N is
    plain = [r for r in rows if r.theta == 0.0]
    assert plain[0].stop_step == plain[1].stop_step
    assert plain[0].rmse == pytest.approx(plain[1].rmse, rel=1e-12)
    assert all(r.variance <= 1e-20 * r.rmse**2 for r in plain)
    assert all(r.variance > 0.0 for r in rows if r.theta > 0.0)
    for r in rows:
        assert r.bias_sq + r.variance == pytest.approx(r.rmse**2, rel=1e-9)

    header = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(experiments.SWEEP_HEADER)
    report = json.loads((tmp_path / "sweep.json").read_text(encoding="utf-8"))
    assert report["parameters"]["thetas"] == [0.0, 0.2]
    assert report["best"]["rmse"] == min(r.rmse for r in rows)


def test_sweep_rejects_inadmissible_theta_before_running(tmp_path):
    cfg = _config("oscillatory", n=20, thetas=(0.1, 5.0), ensemble_sizes=(2,))
    with pytest.raises(ConfigError) as info:
        experiments.cmd_sweep(cfg, tmp_path)
    assert any("theta = 5.0 exceeds" in v for v in info.value.violations)
    assert not (tmp_path / "sweep.csv").exists()
