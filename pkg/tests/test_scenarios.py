import numpy as np
import pytest

from calculators.g_function import GParams
from errors import ScenarioError
from parsers.coefficients import CoefficientBundle
from simulation.scenarios import FeedbackPolicy, VolatilityScenario, parse_scenario, scenario_family
from solvers.pde_solver import DecouplingField, Grid1D


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


def test_constant_scenario(params):
    scenario = VolatilityScenario.constant(params, params.gamma_lo, 1.0)
    assert scenario.label == 'const:0.64'
    np.testing.assert_allclose(scenario.on_grid(np.linspace(0, 1, 11)), 0.64)


def test_values_must_lie_in_interval(params):
    with pytest.raises(ScenarioError):
        VolatilityScenario.constant(params, 2.0, 1.0)
    with pytest.raises(ScenarioError):
        VolatilityScenario(params, (0.0, 0.5, 0.4), (1.0, 1.0))
    with pytest.raises(ScenarioError):
        VolatilityScenario(params, (0.0, 1.0), (1.0, 1.0))


def test_piecewise_lookup(params):
    scenario = VolatilityScenario(params, (0.0, 0.5, 1.0), (0.7, 1.3))
    np.testing.assert_allclose(scenario.at([0.0, 0.49, 0.5, 0.99]), [0.7, 0.7, 1.3, 1.3])
    np.testing.assert_allclose(scenario.on_grid(np.linspace(0, 1, 5)), [0.7, 0.7, 1.3, 1.3])


def test_breakpoint_off_grid(params):
    scenario = VolatilityScenario(params, (0.0, 0.33, 1.0), (0.7, 1.3))
    with pytest.raises(ScenarioError):
        scenario.on_grid(np.linspace(0, 1, 11))


def test_family_is_seeded(params):
    first = scenario_family(params, 1.0, seed=11, n_random=3)
    again = scenario_family(params, 1.0, seed=11, n_random=3)
    other = scenario_family(params, 1.0, seed=12, n_random=3)
    assert len(first) == 5
    assert [s.label for s in first[:2]] == ['const:0.64', 'const:1.44']
    assert first == again
    assert first[2].values != other[2].values
    assert all(params.contains(s.values) for s in first)


def test_scenario_from_csv(params, tmp_path):
    path = tmp_path / 'gamma.csv'
    path.write_text("t,gamma\n0.5,1.3\n0.0,0.7\n")
    scenario = VolatilityScenario.from_csv(str(path), params, 1.0)
    assert scenario.breakpoints == (0.0, 0.5, 1.0)
    assert scenario.values == (0.7, 1.3)
    bad = tmp_path / 'bad.csv'
    bad.write_text("time,gamma\n0.0,1.0\n")
    with pytest.raises(ScenarioError):
        VolatilityScenario.from_csv(str(bad), params, 1.0)


def test_feedback_policy_picks_endpoint(params):
    bundle = CoefficientBundle.from_strings({'phi': 'x^2'})
    grid = Grid1D(-4.0, 4.0, 81, 1.0, nt=10)
    convex = DecouplingField.from_function(grid, lambda t, x: x ** 2)
    concave = DecouplingField.from_function(grid, lambda t, x: -x ** 2)
    x = np.array([-1.0, 0.25, 2.0])
    np.testing.assert_allclose(FeedbackPolicy(bundle, convex, params)(0.5, x), 1.44)
    np.testing.assert_allclose(FeedbackPolicy(bundle, concave, params)(0.5, x), 0.64)


def test_parse_scenario_forms(params, tmp_path):
    assert parse_scenario('const:1.0', params, 1.0).values == (1.0,)
    with pytest.raises(ScenarioError):
        parse_scenario('worst', params, 1.0)
    with pytest.raises(ScenarioError):
        parse_scenario('const:abc', params, 1.0)
    with pytest.raises(ScenarioError):
        parse_scenario('extreme', params, 1.0)
    path = tmp_path / 's.csv'
    path.write_text("t,gamma\n0.0,1.0\n")
    assert parse_scenario(f'file:{path}', params, 1.0).values == (1.0,)


def test_family_breakpoints_follow_step_count(params):
    times = np.linspace(0.0, 1.0, 51)
    family = scenario_family(params, 1.0, seed=11, n_random=3, n_steps=50)
    for scenario in family[2:]:
        assert len(scenario.values) == 4
        gamma = scenario.on_grid(times)
        assert gamma.shape == (50,)
        assert params.contains(gamma)
    assert family[2].breakpoints == pytest.approx((0.0, 0.24, 0.5, 0.76, 1.0))
    # more pieces than steps collapses to one piece per step
    assert len(scenario_family(params, 1.0, seed=11, n_random=1, pieces=4, n_steps=2)[2].values) == 2
