import numpy as np
import pytest

from calculators.g_function import GParams
from errors import FieldHullError, ScenarioError
from parsers.coefficients import CoefficientBundle
from simulation.paths import check_solution, continuity_statistic, path_noise, simulate
from simulation.scenarios import FeedbackPolicy, VolatilityScenario, scenario_family, worst_case_scenario
from solvers.pde_solver import DecouplingField, Grid1D, solve_pde


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


@pytest.fixture
def bundle():
    return CoefficientBundle.from_strings({'phi': 'x^2'})


@pytest.fixture
def exact_field(params):
    """u = x^2 + sigma_hi^2 (T - t) solves the G-heat equation with Phi = x^2."""
    grid = Grid1D(-10.0, 10.0, 101, 1.0, nt=50)
    return DecouplingField.from_function(grid, lambda t, x: x ** 2 + params.gamma_hi * (1.0 - t))


def test_noise_is_prefix_stable_and_thread_independent():
    small = path_noise(5, 10, 8)
    large = path_noise(5, 40, 8)
    np.testing.assert_array_equal(small, large[:10])
    np.testing.assert_array_equal(large, path_noise(5, 40, 8, threads=4))
    assert set(np.unique(small)) <= {-1.0, 1.0}
    assert not np.array_equal(small, path_noise(5, 10, 8, tag='perturb'))
    assert path_noise(5, 3, 4, kind='gaussian').shape == (3, 4)
    with pytest.raises(ValueError):
        path_noise(5, 3, 4, kind='uniform')


def test_worst_case_feedback_keeps_k_at_zero(params, bundle, exact_field):
    paths = simulate(bundle, exact_field, params, FeedbackPolicy(bundle, exact_field, params), 300, 50, seed=3)
    assert not paths.exits
    np.testing.assert_allclose(paths.gamma, params.gamma_hi)
    assert np.max(np.abs(paths.K)) <= 1e-10
    assert paths.terminal_k_stats()['n'] == 300


def test_constant_low_scenario_drifts_k_down(params, bundle, exact_field):
    scenario = VolatilityScenario.constant(params, params.gamma_lo, 1.0)
    paths = simulate(bundle, exact_field, params, scenario, 300, 50, seed=3)
    # A = u_xx = 2 everywhere, so dK = (0.64 - 1.44) dt
    assert paths.terminal_k_stats()['mean'] == pytest.approx(-0.8, abs=1e-8)
    report = check_solution(bundle, exact_field, paths, params)
    assert report['k_nonpositive_fraction'] == 1.0
    assert report['forward_residual_max'] <= 1e-12
    assert report['y_field_identity'] == 0.0
    assert report['terminal_max'] <= exact_field.grid.dx ** 2 / 4 + 1e-12
    assert report['n_exits'] == 0


def test_backward_identity_under_worst_case(params, bundle, exact_field):
    paths = simulate(bundle, exact_field, params, FeedbackPolicy(bundle, exact_field, params), 200, 50, seed=9)
    report = check_solution(bundle, exact_field, paths, params)
    # local truncation of the one-step identity is O(dt) per step
    assert report['backward_residual_max'] < 0.1
    assert report['continuity'] > 0


def test_same_seed_reproduces(params, bundle, exact_field):
    scenario = VolatilityScenario.constant(params, 1.0, 1.0)
    a = simulate(bundle, exact_field, params, scenario, 50, 20, seed=1)
    b = simulate(bundle, exact_field, params, scenario, 50, 20, seed=1)
    np.testing.assert_array_equal(a.X, b.X)
    frame = a.to_frame()
    assert list(frame.columns) == ['path_id', 't', 'X', 'Y', 'Z', 'K']
    assert len(frame) == 50 * 21


def test_hull_exit(params, bundle, exact_field):
    scenario = VolatilityScenario.constant(params, 1.0, 1.0)
    with pytest.raises(FieldHullError) as info:
        simulate(bundle, exact_field, params, scenario, 5, 10, seed=1, x0=11.0, strict=True)
    assert info.value.path_id == 0 and info.value.step == 0
    x0 = np.array([0.0, 11.0, 0.0])
    paths = simulate(bundle, exact_field, params, scenario, 3, 10, seed=1, x0=x0)
    assert paths.exits == [(1, 0)]
    assert paths.alive.tolist() == [True, False, True]
    assert np.isnan(paths.X[1]).all()


def test_explicit_gamma_array(params, bundle, exact_field):
    gamma = np.full(10, 1.0)
    paths = simulate(bundle, exact_field, params, gamma, 4, 10, seed=2)
    np.testing.assert_allclose(paths.gamma, 1.0)
    with pytest.raises(ScenarioError):
        simulate(bundle, exact_field, params, np.full(10, 3.0), 4, 10, seed=2)
    with pytest.raises(ValueError):
        simulate(bundle, exact_field, params, gamma, 4, 10, seed=2, xi=np.ones((4, 3)))


def test_continuity_statistic_for_brownian_scaling(params, bundle, exact_field):
    scenario = VolatilityScenario.constant(params, 1.0, 1.0)
    paths = simulate(bundle, exact_field, params, scenario, 2000, 50, seed=4)
    # E|X_t - X_s|^2 = |t - s| for unit volatility
    assert continuity_statistic(paths) == pytest.approx(1.0, rel=0.25)


def test_worst_case_attains_sup_of_terminal_k(params):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'}, T=0.5)
    field = solve_pde(bundle, params, Grid1D(-6.0, 6.0, 121, 0.5))
    xi = path_noise(9, 400, 50)
    worst = simulate(bundle, field, params, worst_case_scenario(bundle, field, params), 400, 50, 9, xi=xi)
    best = worst.terminal_k_stats()['mean']
    assert best == pytest.approx(0.0, abs=1e-10)
    for scenario in scenario_family(params, 0.5, seed=9, n_random=4, n_steps=50):
        paths = simulate(bundle, field, params, scenario, 400, 50, 9, xi=xi)
        assert np.all(paths.K[paths.alive, -1] <= 1e-10)
        assert paths.terminal_k_stats()['mean'] <= best + 1e-10
    low = simulate(bundle, field, params, scenario_family(params, 0.5, seed=9, n_random=0)[0], 400, 50, 9, xi=xi)
    assert low.terminal_k_stats()['mean'] < best - 1e-6
