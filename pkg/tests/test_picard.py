import numpy as np
import pytest

import solvers.picard as picard
from calculators.g_function import GParams
from errors import HorizonTooLongError
from parsers.coefficients import CoefficientBundle
from solvers.pde_solver import Grid1D, solve_pde
from solvers.picard import IterationState, estimate_delta, picard_solve

COUPLED = {
    'b': '0.5*tanh(y)', 'h': '0.1*sin(y)', 'sigma': '1 + 0.2*tanh(y)',
    'f': '-0.5*y + 0.2*cos(x) + 0.1*tanh(z)', 'g': '0.1*tanh(z)', 'phi': 'tanh(x)',
}


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


@pytest.fixture
def grid():
    return Grid1D(-4.0, 4.0, 81, 0.05)


def test_ratio_estimate():
    assert IterationState(y=np.zeros(1), contraction_history=[1.0, 0.5, 0.25]).ratio == pytest.approx(0.5)
    assert IterationState(y=np.zeros(1), contraction_history=[1.0, 0.0, 0.0]).ratio == 0.0
    assert IterationState(y=np.zeros(1), contraction_history=[0.3]).ratio == 0.0


def test_decoupled_system_matches_pde(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)', 'f': '0.2*cos(x)'}, T=0.05)
    field, state = picard_solve(bundle, params, (0.0, 0.05), bundle.terminal(grid.x), grid)
    assert state.converged
    assert state.ratio == 0.0
    assert state.iter == 1
    reference = solve_pde(bundle, params, grid)
    np.testing.assert_allclose(field.values, reference.values, atol=1e-10)


def test_coupled_small_time_contracts(params, grid):
    bundle = CoefficientBundle.from_strings(COUPLED, T=0.05)
    field, state = picard_solve(bundle, params, (0.0, 0.05), bundle.terminal(grid.x), grid, tol=1e-10)
    assert state.converged
    assert state.ratio < 0.5
    assert state.meta['within_growth_bound']
    assert field.meta['iterations'] == len(state.contraction_history) - 1
    np.testing.assert_allclose(field.values[-1], bundle.terminal(grid.x))


def test_non_contracting_map_raises(params, grid, monkeypatch):
    calls = []

    def diverging(bundle, params, grid, terminal, y):
        calls.append(1)
        return y + 2.0 ** len(calls), 0

    monkeypatch.setattr(picard, 'picard_map', diverging)
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'}, T=0.05)
    with pytest.raises(HorizonTooLongError) as info:
        picard_solve(bundle, params, (0.0, 0.05), bundle.terminal(grid.x), grid, cell=3)
    assert info.value.ratio == pytest.approx(2.0)
    assert info.value.cell == 3
    assert info.value.horizon == (0.0, 0.05)
    assert len(calls) == 6


def test_shape_checks(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'}, T=0.05)
    with pytest.raises(ValueError):
        picard_solve(bundle, params, (0.05, 0.0), bundle.terminal(grid.x), grid)
    with pytest.raises(ValueError):
        picard_solve(bundle, params, (0.0, 0.05), np.zeros(5), grid)
    with pytest.raises(ValueError):
        picard_solve(bundle, params, (0.0, 0.05), bundle.terminal(grid.x), grid, initial=np.zeros((2, 2)))


def test_estimate_delta_accepts_whole_horizon_when_decoupled(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'}, T=0.05)
    estimate = estimate_delta(bundle, params, grid, 0.05)
    assert estimate['delta'] == 0.05
    assert estimate['trace'][0]['ok']


def test_perturbed_initial_guess_reaches_same_field(params, grid):
    bundle = CoefficientBundle.from_strings(COUPLED, T=0.05)
    terminal = bundle.terminal(grid.x)
    field, _ = picard_solve(bundle, params, (0.0, 0.05), terminal, grid, tol=1e-13)
    start = field.values + 0.3 * np.cos(grid.x)[None, :]
    again, state = picard_solve(bundle, params, (0.0, 0.05), terminal, grid, tol=1e-13, initial=start)
    assert state.converged
    assert state.iter > 1
    np.testing.assert_allclose(again.values, field.values, atol=1e-10)


def test_stronger_coupling_shrinks_delta(params):
    grid = Grid1D(-4.0, 4.0, 41, 1.0)
    weak = CoefficientBundle.from_strings({'b': '0.05*tanh(y)', 'phi': 'tanh(x)'})
    strong = weak.with_slots(b='20*tanh(y)')
    weak_delta = estimate_delta(weak, params, grid, 1.0)['delta']
    strong_delta = estimate_delta(strong, params, grid, 1.0)['delta']
    assert 0.0 < strong_delta < weak_delta
