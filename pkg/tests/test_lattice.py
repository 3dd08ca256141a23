import numpy as np
import pytest

from calculators.g_function import GParams
from calculators.lattice import (conditional_field, conditional_value, g_expectation, reroot,
                                 scenario_expectation)
from errors import NumericalBlowUpError, ScenarioError
from parsers.expression import parse


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


def test_quadratic_moments_are_exact(params):
    assert g_expectation(params, lambda x: x ** 2, 1.0, 200) == pytest.approx(1.44, abs=1e-10)
    assert g_expectation(params, lambda x: -x ** 2, 1.0, 200) == pytest.approx(-0.64, abs=1e-10)


def test_linear_terminal_has_zero_mean(params):
    assert g_expectation(params, parse("x"), 1.0, 50) == pytest.approx(0.0, abs=1e-12)


def test_classical_fourth_moment():
    params = GParams(1.0, 1.0)
    assert g_expectation(params, lambda x: x ** 4, 1.0, 200) == pytest.approx(3.0, abs=0.02)


def test_sublinear_sandwich(params):
    phi = parse("sin(3*x) + 0.5*x^2")
    upper = g_expectation(params, phi, 1.0, 100)
    lo = scenario_expectation(params, phi, 1.0, 100, params.gamma_lo)
    hi = scenario_expectation(params, phi, 1.0, 100, params.gamma_hi)
    assert upper >= max(lo, hi) - 1e-12
    assert g_expectation(params, lambda x: -np.sin(3 * x) - 0.5 * x ** 2, 1.0, 100) >= -upper - 1e-12


def test_policy_reproduces_root_value(params):
    lattice = conditional_field(params, parse("sin(3*x)"), 1.0, 60)
    assert scenario_expectation(params, parse("sin(3*x)"), 1.0, 60, lattice.policy) == lattice.root_value
    assert all(params.contains(p) for p in lattice.policy)


def test_tower_property_by_rerooting(params):
    lattice = conditional_field(params, parse("abs(x)"), 1.0, 40)
    assert reroot(lattice, 20) == pytest.approx(lattice.root_value, abs=1e-14)


def test_level_shapes_and_frame(params):
    lattice = conditional_field(params, parse("x^2"), 0.5, 10)
    assert [level.size for level in lattice.values] == [2 * k + 1 for k in range(11)]
    frame = lattice.to_frame()
    assert list(frame.columns) == ['t', 'x', 'v']
    assert len(frame) == sum(2 * k + 1 for k in range(11))
    # x^2 at level k: x^2 + gamma_hi (T - t)
    assert conditional_value(lattice, 4, 2 * lattice.dx) == pytest.approx(
        (2 * lattice.dx) ** 2 + 1.44 * (0.5 - lattice.time(4)))


def test_off_node_lookup_rejected(params):
    lattice = conditional_field(params, parse("x"), 1.0, 4)
    with pytest.raises(ValueError):
        conditional_value(lattice, 1, 0.5 * lattice.dx)
    with pytest.raises(ValueError):
        conditional_value(lattice, 1, 3 * lattice.dx)


@pytest.mark.parametrize("T,N", [(1.0, 0), (0.0, 10), (1.0, 2.5)])
def test_invalid_lattice_arguments(params, T, N):
    with pytest.raises(ValueError):
        g_expectation(params, parse("x"), T, N)


def test_non_finite_terminal(params):
    with pytest.raises(NumericalBlowUpError):
        g_expectation(params, lambda x: np.where(x > 0, np.inf, 0.0), 1.0, 10)


def test_scenario_outside_interval(params):
    with pytest.raises(ScenarioError):
        scenario_expectation(params, parse("x"), 1.0, 10, 2.0)
    with pytest.raises(ScenarioError):
        scenario_expectation(params, parse("x"), 1.0, 10, [1.0] * 9)
