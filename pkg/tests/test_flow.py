import logging
import math

import numpy as np
import pytest

from sar.core import GridSpec, GridVector, norm
from sar.errors import ConfigError, DivergenceError
from sar.flow import (
    SarConfig,
    Termination,
    admissibility_bounds,
    check_stop,
    initial_state,
    noise_coefficient,
    rmsr_from_norms,
    run,
    step,
    validate_params,
)
from sar.problems import (
    DiagonalProblem,
    EllipticProblem,
    linear_flow_closed_form,
    make_source_case,
    mean_initial_guess,
    operator_norm_estimate,
    synthesize_data_at_level,
    true_parameter,
)
from sar.wiener import CovarianceSpec


def test_default_parameters_are_admissible():
    assert validate_params(SarConfig(dt=0.1)) == []


def test_admissibility_bounds():
    b = admissibility_bounds(eta=0.1, eps0=1.0, delta0=1.0)
    assert b.eps0_upper == pytest.approx(18.0)
    assert b.tau_lower == pytest.approx(2.2 / 1.7)
    assert b.theta_upper == pytest.approx(math.sqrt(0.1))


def test_eps0_above_bound_is_reported():
    violations = validate_params(SarConfig(dt=0.1, eta=0.99, eps0=1.0))
    assert any(v.startswith("eps0 = 1.0 exceeds 2(1/eta - 1)") for v in violations)


def test_every_violation_is_collected():
    cfg = SarConfig(dt=-1.0, ensemble_size=0, tau=1.0, theta=5.0, delta=2.0)
    violations = validate_params(cfg)
    joined = "\n".join(violations)
    assert "dt = -1.0" in joined
    assert "ensemble_size = 0" in joined
    assert "tau = 1.0 must exceed" in joined
    assert "theta = 5.0 exceeds" in joined
    assert not any(v.startswith("delta = ") for v in violations)


def test_noise_coefficient():
    assert noise_coefficient(2.0, 3.0, 0.5) == pytest.approx(0.5)
    assert noise_coefficient(2.0, 3.0, 0.0) == 0.0
    with pytest.raises(ValueError):
        noise_coefficient(1.0, -1.0, 0.5)


def test_stop_rule_is_strict():
    cfg = SarConfig(dt=1.0, tau=2.0, delta=0.05)
    assert not check_stop(0.1, cfg)
    assert check_stop(0.0999, cfg)


def test_rmsr_from_norms():
    assert rmsr_from_norms([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(ValueError):
        rmsr_from_norms([])


def _diagonal_case(diagonal, delta, seed=0, gamma=1.0 / 3.0, bound=3.0):
    case = make_source_case(gamma, bound, diagonal, profile="power")
    y = diagonal.apply(case.x_true)
    y_delta = synthesize_data_at_level(y, delta, np.random.default_rng(seed))
    return case, y, y_delta


def test_deterministic_flow_matches_reference_loop():
    g = GridSpec(1, 200)
    problem = EllipticProblem(g)
    truth = true_parameter("1d", g)
    x0 = mean_initial_guess(truth)
    y = problem.apply(truth)
    dt = 0.5 / operator_norm_estimate(problem, x0) ** 2
    cfg = SarConfig(dt=dt, ensemble_size=3, max_steps=1000, log_every=0)
    record = run(problem, truth, y, cfg, initial_guess=x0)

    x = x0
    for _ in range(1000):
        x = GridVector(x.values + dt * problem.adjoint_apply(x, y - problem.apply(x)).values, g)

    assert record.termination is Termination.MAX_STEPS
    assert record.final.step == 1000
    for particle in record.final.particles:
        np.testing.assert_allclose(particle.values, x.values, rtol=1e-14, atol=0.0)
    r = np.array(record.rmsr)
    assert np.all(np.diff(r) <= 1e-12 * r[:-1])
    assert all(f == 0.0 for f in record.noise_coefficients)


def test_small_step_flow_matches_closed_form(diagonal):
    case, y, _ = _diagonal_case(diagonal, 0.0, gamma=0.5, bound=0.01)
    cfg = SarConfig(dt=1e-4, max_steps=10_000, log_every=0)
    record = run(diagonal, case.x_true, y, cfg, initial_guess=case.initial_guess)
    final = record.final
    exact = linear_flow_closed_form(diagonal, case, y, y, final.time)
    assert norm(final.particles[0] - exact) <= 1e-6


def test_noisy_run_stops_at_discrepancy(diagonal):
    case, _, y_delta = _diagonal_case(diagonal, 0.01)
    cfg = SarConfig(dt=0.25, theta=0.1, ensemble_size=4, tau=1.5, delta=0.01, log_every=0)
    record = run(diagonal, case.x_true, y_delta, cfg, initial_guess=case.initial_guess)
    assert record.termination is Termination.STOPPED
    assert record.stop_step == record.final.step > 0
    assert record.rmsr[-1] < cfg.tau * cfg.delta <= record.rmsr[-2]
    assert record.stop_time == pytest.approx(record.stop_step * cfg.dt)
    assert record.noise_coefficients[0] == pytest.approx(record.rmsr[0] * 0.1)


def test_precondition_failure_returns_initial_guess(diagonal, caplog):
    case = make_source_case(1.0 / 3.0, 3.0, diagonal, profile="power")
    y_delta = synthesize_data_at_level(diagonal.apply(case.x_true), 0.01, np.random.default_rng(1))
    cfg = SarConfig(dt=0.25, theta=0.1, ensemble_size=3, tau=1.5, delta=0.01)
    with caplog.at_level(logging.WARNING, logger="sar.flow"):
        record = run(diagonal, case.x_true, y_delta, cfg, initial_guess=case.x_true)
    assert record.termination is Termination.PRECONDITION_FAILED
    assert record.stop_step == 0
    assert record.steps == 1
    for particle in record.final.particles:
        np.testing.assert_array_equal(particle.values, case.x_true.values)
    assert "initial residual" in caplog.text


def test_invalid_parameters_raise(diagonal):
    case = make_source_case(1.0 / 3.0, 3.0, diagonal, profile="power")
    y = diagonal.apply(case.x_true)
    with pytest.raises(ConfigError) as info:
        run(diagonal, case.x_true, y, SarConfig(dt=0.1, eta=0.99), initial_guess=case.initial_guess)
    assert info.value.violations


def test_divergence_is_detected(diagonal):
    case, _, y_delta = _diagonal_case(diagonal, 1e-3)
    cfg = SarConfig(dt=10.0, tau=1.5, delta=1e-3, log_every=0)
    with pytest.raises(DivergenceError) as info:
        run(diagonal, case.x_true, y_delta, cfg, initial_guess=case.initial_guess)
    assert info.value.step > 0
    assert info.value.particle == 0


def _stochastic_run(problem, seed, threads):
    case, _, y_delta = _diagonal_case(problem, 0.01)
    cfg = SarConfig(
        dt=0.5,
        theta=0.3,
        ensemble_size=6,
        tau=1.5,
        delta=0.01,
        max_steps=50,
        cov=CovarianceSpec(kind="eigen_decay", beta=2.0, basis="coordinate"),
        master_seed=seed,
        threads=threads,
        log_every=0,
    )
    return run(problem, case.x_true, y_delta, cfg, initial_guess=case.initial_guess)


def test_thread_count_does_not_change_results(diagonal):
    serial = _stochastic_run(diagonal, seed=5, threads=1)
    threaded = _stochastic_run(diagonal, seed=5, threads=3)
    assert serial.rmsr == threaded.rmsr
    for a, b in zip(serial.final.particles, threaded.final.particles):
        np.testing.assert_array_equal(a.values, b.values)


def test_seed_changes_the_ensemble(diagonal):
    a = _stochastic_run(diagonal, seed=5, threads=1)
    b = _stochastic_run(diagonal, seed=6, threads=1)
    assert not np.array_equal(a.final.particles[0].values, b.final.particles[0].values)


def test_particles_decorrelate_under_noise(diagonal):
    record = _stochastic_run(diagonal, seed=5, threads=1)
    first, second = record.final.particles[:2]
    assert norm(first - second) > 0.0


def test_single_step_keeps_bookkeeping(diagonal):
    case, _, y_delta = _diagonal_case(diagonal, 0.01)
    cfg = SarConfig(dt=0.25, theta=0.1, ensemble_size=2, tau=1.5, delta=0.01)
    state = initial_state(diagonal, y_delta, cfg, case.initial_guess)
    nxt = step(state, cfg, diagonal, y_delta)
    assert nxt.step == 1
    assert nxt.time == pytest.approx(0.25)
    assert nxt.residual_norms.shape == (2,)
    assert nxt.rmsr < state.rmsr


def test_tau_threshold_for_small_eps0():
    # threshold (2 + 1.5)/(2 - 2.000001*0.75) is just above 7
    assert validate_params(SarConfig(dt=0.1, eta=0.75, eps0=1e-6, tau=7.1)) == []
    violations = validate_params(SarConfig(dt=0.1, eta=0.75, eps0=1e-6, tau=6.9))
    assert len(violations) == 1
    assert violations[0].startswith("tau = 6.9 must exceed")


def test_large_delta_ends_in_precondition_failure(diagonal, caplog):
    case = make_source_case(1.0 / 3.0, 3.0, diagonal, profile="power")
    y = diagonal.apply(case.x_true)
    r0 = diagonal.residual_norm(case.initial_guess, y)
    delta = max(2.0 * r0, 2.0)
    cfg = SarConfig(dt=0.25, theta=0.1, ensemble_size=3, tau=1.5, delta=delta, delta0=1.0)
    assert validate_params(cfg) == []
    with caplog.at_level(logging.WARNING, logger="sar.flow"):
        record = run(diagonal, case.x_true, y, cfg, initial_guess=case.initial_guess)
    assert record.termination is Termination.PRECONDITION_FAILED
    assert record.stop_step == 0
    assert "exceeds delta0" in caplog.text


def _scalar_identity():
    # two decoupled copies of F(x) = x on a unit-weight grid
    problem = DiagonalProblem(np.ones(2))
    grid = problem.param_grid
    return problem, GridVector.full(grid, 1.0), GridVector.zeros(grid)


def test_scalar_landweber_steps():
    problem, y, x0 = _scalar_identity()
    cfg = SarConfig(dt=0.5)
    state = initial_state(problem, y, cfg, x0)
    first = step(state, cfg, problem, y)
    second = step(first, cfg, problem, y)
    np.testing.assert_allclose(first.particles[0].values, 0.5)
    np.testing.assert_allclose(second.particles[0].values, 0.75)


def test_single_step_mean_matches_deterministic_step():
    problem, y, x0 = _scalar_identity()
    m = 10_000
    noisy = SarConfig(dt=0.5, theta=0.1, ensemble_size=m, delta=0.01, master_seed=17)
    state = initial_state(problem, y, noisy, x0)
    f_k = noise_coefficient(state.rmsr, state.time, noisy.theta)
    moved = step(state, noisy, problem, y)
    drift = step(state, SarConfig(dt=0.5, ensemble_size=1), problem, y).particles[0].values
    mean = np.mean([p.values for p in moved.particles], axis=0)
    assert f_k > 0.0
    assert np.all(np.abs(mean - drift) <= 4.0 * f_k * math.sqrt(noisy.dt / m))


def test_noise_coefficient_stays_below_its_bound(diagonal):
    record = _stochastic_run(diagonal, seed=5, threads=1)
    eps0, eta = SarConfig.eps0, SarConfig.eta
    for f_k, r_k in zip(record.noise_coefficients, record.rmsr):
        assert f_k * f_k <= eps0 * eta * r_k * r_k
