import numpy as np
import pytest

from calculators.g_function import GParams
from calculators.lattice import g_expectation
from errors import CFLViolationError, FieldHullError
from parsers.coefficients import CoefficientBundle
from solvers.pde_solver import (DecouplingField, Grid1D, cfl_rate, exp_transform, field_derivatives,
                                resolve_grid, scheme_residual, solve_pde, spatial_derivatives)


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


@pytest.fixture
def grid():
    return Grid1D(-6.0, 6.0, 121, 0.25)


@pytest.mark.parametrize("phi,gamma_attr", [('x^2', 'gamma_hi'), ('-x^2', 'gamma_lo')])
def test_g_heat_quadratic(params, grid, phi, gamma_attr):
    bundle = CoefficientBundle.from_strings({'phi': phi})
    field = solve_pde(bundle, params, grid)
    sign = 1.0 if phi == 'x^2' else -1.0
    expected = sign * getattr(params, gamma_attr) * grid.T
    assert field_derivatives(field, 0.0, 0.0)[0] == pytest.approx(expected, abs=1e-8)


def test_classical_heat_matches_feynman_kac():
    params = GParams(1.0, 1.0)
    bundle = CoefficientBundle.from_strings({'phi': 'cos(x)'})
    field = solve_pde(bundle, params, Grid1D(-6.0, 6.0, 241, 0.5))
    assert field_derivatives(field, 0.0, 0.0)[0] == pytest.approx(np.exp(-0.25), abs=2e-3)


def test_auto_nt_respects_cfl_target(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'})
    resolved, probe = resolve_grid(bundle, params, grid)
    assert resolved.nt > 0
    assert probe['cfl'] <= grid.cfl_target + 1e-12
    assert cfl_rate(bundle, params, grid)['rate'] == pytest.approx(1.44 / grid.dx ** 2)


def test_explicit_nt_too_small(params):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'})
    with pytest.raises(CFLViolationError):
        solve_pde(bundle, params, Grid1D(-6.0, 6.0, 241, 1.0, nt=10))


def test_meta_and_scheme_residual(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)', 'f': '0.1*cos(x)'})
    field = solve_pde(bundle, params, grid)
    for key in ('m0', 'M_lip', 'dt', 'nt', 'cfl', 'terminal_fit_residual', 'uxx_terminal_ratio'):
        assert key in field.meta
    assert field.meta['terminal_fit_residual'] == 0.0
    assert scheme_residual(field, bundle, params) == 0.0
    frame = field.to_frame()
    assert list(frame.columns) == ['t', 'x', 'u', 'u_x', 'u_xx']
    assert len(frame) == (field.grid.nt + 1) * grid.nx


@pytest.mark.parametrize("kwargs", [
    dict(x_min=1.0, x_max=0.0, nx=11, T=1.0),
    dict(x_min=0.0, x_max=1.0, nx=2, T=1.0),
    dict(x_min=0.0, x_max=1.0, nx=11, T=0.0),
    dict(x_min=0.0, x_max=1.0, nx=11, T=1.0, cfl_target=1.5),
])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        Grid1D(**kwargs)


def test_spatial_derivatives_of_quadratic():
    x = np.linspace(-1, 1, 21)
    ux, uxx = spatial_derivatives(x ** 2, x[1] - x[0])
    np.testing.assert_allclose(ux[1:-1], 2 * x[1:-1], atol=1e-12)
    np.testing.assert_allclose(uxx[1:-1], 2.0, atol=1e-9)
    assert uxx[0] == 0.0 and uxx[-1] == 0.0


def test_field_derivatives_on_and_off_grid():
    grid = Grid1D(-3.0, 3.0, 601, 1.0, nt=10)
    field = DecouplingField.from_function(grid, lambda t, x: np.exp(t) * np.sin(x))
    u, ux, uxx = field_derivatives(field, 0.5, 0.3)
    assert isinstance(u, float)
    assert u == pytest.approx(np.exp(0.5) * np.sin(0.3), abs=1e-2)
    assert ux == pytest.approx(np.exp(0.5) * np.cos(0.3), abs=1e-2)
    assert uxx == pytest.approx(-np.exp(0.5) * np.sin(0.3), abs=1e-2)
    # node values are returned exactly
    assert field_derivatives(field, 0.0, 0.0)[0] == pytest.approx(0.0, abs=1e-12)
    values = field_derivatives(field, 1.0, np.array([0.0, 0.0051]))[0]
    assert values.shape == (2,)


def test_field_hull(params):
    grid = Grid1D(-1.0, 1.0, 21, 1.0, nt=4)
    field = DecouplingField.from_function(grid, lambda t, x: x)
    with pytest.raises(FieldHullError):
        field_derivatives(field, 0.5, 1.5)
    with pytest.raises(FieldHullError):
        field_derivatives(field, 1.5, 0.0)


def test_from_function_needs_nt():
    with pytest.raises(ValueError):
        DecouplingField.from_function(Grid1D(-1.0, 1.0, 21, 1.0), lambda t, x: x)


def test_exp_transform_inverts(params, grid):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)'})
    field = solve_pde(bundle, params, grid)
    forward = exp_transform(field, 2.0, 'forward')
    np.testing.assert_allclose(forward.values[-1], field.values[-1])
    np.testing.assert_allclose(forward.values[0], np.exp(-2.0 * grid.T) * field.values[0])
    np.testing.assert_allclose(exp_transform(forward, 2.0, 'inverse').values, field.values)
    with pytest.raises(ValueError):
        exp_transform(field, 1.0, 'sideways')


def test_comparison_of_ordered_terminals(params):
    grid = Grid1D(-4.0, 4.0, 81, 0.2, nt=40)
    low = CoefficientBundle.from_strings({'phi': 'tanh(x)', 'f': '-0.5*y + 0.2*cos(x)'})
    high = low.with_slots(phi='tanh(x) + 0.1*exp(-x^2)')
    u_low = solve_pde(low, params, grid).values
    u_high = solve_pde(high, params, grid).values
    assert np.all(u_high >= u_low - 1e-12)
    assert np.max(u_high[0] - u_low[0]) > 0.0


def test_discrete_maximum_principle(params):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x) + 0.3*cos(2*x)'})
    field = solve_pde(bundle, params, Grid1D(-4.0, 4.0, 81, 0.5))
    terminal = field.values[-1]
    assert field.values.min() >= terminal.min() - 1e-12
    assert field.values.max() <= terminal.max() + 1e-12


def test_domain_doubling_keeps_interior(params):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)', 'f': '0.2*cos(x)'})
    narrow = solve_pde(bundle, params, Grid1D(-4.0, 4.0, 81, 0.05, nt=20))
    wide = solve_pde(bundle, params, Grid1D(-8.0, 8.0, 161, 0.05, nt=20))
    # boundary effects travel one node per step, 20 nodes = 2.0 here
    inside_narrow = np.abs(narrow.x) <= 1.5 + 1e-9
    inside_wide = np.abs(wide.x) <= 1.5 + 1e-9
    np.testing.assert_allclose(narrow.values[:, inside_narrow], wide.values[:, inside_wide], atol=1e-12)


def test_feynman_kac_gap_shrinks_under_refinement(params):
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x + 0.5)'})
    gaps = []
    for nx, N in ((61, 50), (241, 800)):
        field = solve_pde(bundle, params, Grid1D(-6.0, 6.0, nx, 1.0))
        lattice = g_expectation(params, bundle.phi, 1.0, N)
        gaps.append(abs(field_derivatives(field, 0.0, 0.0)[0] - lattice))
    assert gaps[1] < gaps[0]
    assert gaps[1] <= 5e-3
