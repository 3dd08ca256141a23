"""
Cross-checks run by `validate`, in order. Each check takes a RunConfig and
returns a dict with 'check', 'status', 'passed' and the figures it measured.

Oracle sizes are fixed here so results do not depend on the config's
run section beyond the volatility interval, terminal function and seed.
"""
from typing import Callable, Dict, List

import numpy as np

from calculators.classifier import classify_check
from calculators.convergence import fitted_order, richardson_order
from calculators.g_function import GParams, check_properties, g_eval
from calculators.lattice import g_expectation
from calculators.mollifier import MollifierKernel, empirical_lipschitz, mollify
from parsers.coefficients import CoefficientBundle
from parsers.config_loader import RunConfig
from simulation.dependence import DependenceConfig, dependence_check, dependence_point
from simulation.paths import check_solution, simulate
from simulation.scenarios import VolatilityScenario, worst_case_scenario
from solvers.pde_solver import DecouplingField, Grid1D, field_derivatives, solve_pde
from solvers.picard import picard_solve
from solvers.stitch import stitch_solve

COUPLED_TEST = {
    'b': '0.5*tanh(y)',
    'h': '0.1*sin(y)',
    'sigma': '1 + 0.2*tanh(y)',
    'f': '-0.5*y + 0.2*cos(x) + 0.1*tanh(z)',
    'g': '0.1*tanh(z)',
    'phi': 'tanh(x)',
}

MANUFACTURED = {'f': '-exp(t - 1)*tanh(x)^3', 'phi': 'tanh(x)'}


def _result(name: str, passed: bool, skipped: bool = False, **figures) -> Dict:
    return {'check': name, 'status': classify_check(passed, skipped), 'passed': passed or skipped, **figures}


def heat_bundle(config: RunConfig) -> CoefficientBundle:
    """The config's terminal function with b = h = f = g = 0 and sigma = 1."""
    return config.coefficients.with_slots(b='0', h='0', sigma='1', f='0', g='0')


def check_g_function(config: RunConfig) -> Dict:
    params = config.g
    rng = np.random.default_rng(config.run.seed)
    a = rng.uniform(-10, 10, 1_000_000)
    explicit = 0.5 * params.gamma_hi * np.maximum(a, 0.0) - 0.5 * params.gamma_lo * np.maximum(-a, 0.0)
    exactness = float(np.max(np.abs(g_eval(params, a) - explicit)))
    violations = check_properties(params, n_samples=100_000, seed=config.run.seed)
    worst = max(v for k, v in violations.items() if k != 'n_samples')
    return _result('g_function', exactness == 0.0 and worst == 0.0, exactness=exactness, worst_violation=worst)


def check_lattice_moments(config: RunConfig) -> Dict:
    params = config.g
    figures = {}
    passed = True
    for label, phi, exact in (('x2', lambda x: x ** 2, params.gamma_hi),
                              ('neg_x2', lambda x: -x ** 2, -params.gamma_lo)):
        err200 = abs(g_expectation(params, phi, 1.0, 200) - exact)
        err800 = abs(g_expectation(params, phi, 1.0, 800) - exact)
        halving = err200 <= 1e-10 or 1.6 <= err200 / max(err800, 1e-300) <= 2.4
        passed &= err200 <= 0.02 and halving
        figures[f'{label}_err200'] = err200
        figures[f'{label}_err800'] = err800
    mean = g_expectation(params, lambda x: x, 1.0, 200)
    figures['x_mean'] = mean
    passed &= abs(mean) <= 1e-12
    if params.is_classical:
        figures['moment_gap'] = abs(g_expectation(params, lambda x: x ** 2, 1.0, 200)
                                    + g_expectation(params, lambda x: -x ** 2, 1.0, 200))
        passed &= figures['moment_gap'] <= 1e-12
    return _result('lattice_moments', passed, **figures)


def check_feynman_kac(config: RunConfig) -> Dict:
    params = config.g
    bundle = heat_bundle(config)
    field = solve_pde(bundle, params, config.grid)
    u0 = field_derivatives(field, 0.0, 0.0)[0]
    lattice = g_expectation(params, bundle.phi, bundle.T, 400)
    gap = abs(u0 - lattice)
    return _result('feynman_kac', gap <= 5e-3, u_pde=u0, u_lattice=lattice, gap=gap, nt=field.grid.nt)


MANUFACTURED_LEVELS = ((41, 13), (81, 52), (161, 208))


def manufactured_run(nx: int, nt: int, window: float = 2.0) -> Dict:
    """
    solve_pde against u* = e^{-(1-t)} tanh(x) on [-6, 6] with sigma_lo = sigma_hi = 1.

    Returns:
        Dict with 'error' (max over |x| <= window) and 'probe' (u(0, 1.2))
    """
    params = GParams(1.0, 1.0)
    bundle = CoefficientBundle.from_strings(MANUFACTURED)
    field = solve_pde(bundle, params, Grid1D(-6.0, 6.0, nx, 1.0, nt=nt))
    exact = np.exp(-(1.0 - field.times))[:, None] * np.tanh(field.x)[None, :]
    inside = np.abs(field.x) <= window
    return {
        'error': float(np.max(np.abs(field.values[:, inside] - exact[:, inside]))),
        'probe': field_derivatives(field, 0.0, 1.2)[0],
    }


def check_manufactured(config: RunConfig) -> Dict:
    runs = [manufactured_run(nx, nt) for nx, nt in MANUFACTURED_LEVELS]
    steps = [12.0 / (nx - 1) for nx, _ in MANUFACTURED_LEVELS]
    errors = [r['error'] for r in runs]
    fit = fitted_order(steps, errors)
    observed = richardson_order(*(r['probe'] for r in runs), ratio=2.0)
    passed = fit['order'] >= 1.8 and observed >= 1.8
    return _result('manufactured_solution', passed, errors=errors, fitted_order=fit['order'],
                   richardson_order=observed)


def check_k_invariants(config: RunConfig) -> Dict:
    params = config.g
    T = 1.0
    bundle = CoefficientBundle.from_strings({'phi': 'x^2'}, T=T)
    grid = Grid1D(-8.0, 8.0, 161, T, nt=200)
    exact = DecouplingField.from_function(grid, lambda t, x: x ** 2 + params.gamma_hi * (T - t))
    n_paths = min(config.run.n_paths, 10_000)
    seed = config.run.seed
    worst = simulate(bundle, exact, params, worst_case_scenario(bundle, exact, params), n_paths, 100, seed)
    low = simulate(bundle, exact, params, VolatilityScenario.constant(params, params.gamma_lo, T), n_paths, 100, seed)
    w, lo = worst.terminal_k_stats(), low.terminal_k_stats()
    increments_ok = all(np.all(np.diff(p.K[p.alive], axis=1) <= 0.0) for p in (worst, low))
    worst_ok = abs(w['mean']) <= 3.0 * w['stderr'] + 1e-14
    figures = {'worst_mean_K': w['mean'], 'worst_stderr': w['stderr'], 'low_mean_K': lo['mean'],
               'low_stderr': lo['stderr'], 'increments_nonpositive': increments_ok}
    if params.is_classical:
        return _result('k_invariants', increments_ok and worst_ok and abs(lo['mean']) <= 1e-12, **figures)
    low_ok = lo['mean'] < -3.0 * lo['stderr'] and lo['mean'] < 0.0
    return _result('k_invariants', increments_ok and worst_ok and low_ok, **figures)


def check_classical_identity(config: RunConfig) -> Dict:
    params = GParams(1.0, 1.0)
    bundle = CoefficientBundle.from_strings({'phi': 'x'})
    grid = Grid1D(-10.0, 10.0, 201, 1.0, nt=100)
    identity = DecouplingField.from_function(grid, lambda t, x: x)
    paths = simulate(bundle, identity, params, VolatilityScenario.constant(params, 1.0, 1.0), 1000, 100,
                     config.run.seed)
    report = check_solution(bundle, identity, paths)
    k_max = float(np.max(np.abs(paths.K[paths.alive])))
    passed = report['backward_residual_max'] <= 1e-12 and k_max == 0.0
    return _result('classical_identity', passed, backward_residual=report['backward_residual_max'], k_max=k_max)


def check_picard(config: RunConfig) -> Dict:
    params = config.g
    grid = Grid1D(-4.0, 4.0, 81, 1.0)
    ratios = {}
    figures = {}
    for T in (0.4, 0.2, 0.1, 0.05):
        bundle = CoefficientBundle.from_strings(COUPLED_TEST, T=T)
        field, state = picard_solve(bundle, params, (0.0, T), bundle.terminal(grid.x), grid.with_horizon(0.0, T))
        ratios[T] = state.ratio
        if T == 0.05:
            reference = solve_pde(bundle, params, grid.with_horizon(0.0, T, field.grid.nt))
            figures['gap_to_pde'] = float(np.max(np.abs(reference.values - field.values)))
            figures['iterations'] = state.iter
    trend = [ratios[T] for T in (0.4, 0.2, 0.1, 0.05)]
    decreasing = all(a > b for a, b in zip(trend, trend[1:]))
    passed = ratios[0.05] <= 0.5 and figures['gap_to_pde'] <= 1e-3 and decreasing
    return _result('picard_contraction', passed, ratios=trend, ratio_decreasing=decreasing, **figures)


def check_stitch(config: RunConfig) -> Dict:
    params = config.g
    bundle = config.coefficients
    stitched = stitch_solve(bundle, params, bundle.T, min(0.1, bundle.T), config.grid)
    reference = solve_pde(bundle, params, stitched.grid)
    window = np.abs(stitched.x) <= 0.5 * max(abs(config.grid.x_min), abs(config.grid.x_max))
    gap = float(np.max(np.abs(stitched.values[:, window] - reference.values[:, window])))
    seam = stitched.meta['seam_gap']
    return _result('stitch_vs_pde', gap <= 5e-3 and seam == 0.0, gap=gap, seam_gap=seam,
                   cells=len(stitched.meta['cells']))


def check_mollifier(config: RunConfig) -> Dict:
    x = np.linspace(-3.0, 3.0, 1921)
    dx = x[1] - x[0]
    phi = np.abs(x)
    lip = empirical_lipschitz(phi, dx)
    figures = {'kernel_mass': float(np.sum(MollifierKernel(40).weights(dx)))}
    passed = abs(figures['kernel_mass'] - 1.0) <= 1e-8
    for n in (5, 10, 20, 40):
        smooth = mollify(phi, dx, n)
        deviation = float(np.max(np.abs(smooth - phi)))
        figures[f'sup_dev_n{n}'] = deviation
        passed &= deviation <= 1.0 / n + 1e-6
        passed &= empirical_lipschitz(smooth, dx) <= lip + 1e-10
    return _result('mollifier', passed, **figures)


def check_dependence(config: RunConfig) -> Dict:
    params = config.g
    bundle = heat_bundle(config)
    shifted = bundle.with_slots(f='1')
    grid = Grid1D(config.grid.x_min, config.grid.x_max, min(config.grid.nx, 121), bundle.T)
    cfg = DependenceConfig(alpha=0.5, n_paths=min(config.run.n_paths, 2000), n_steps=50, seed=config.run.seed,
                           increments=config.run.increments)
    identical = dependence_point(bundle, bundle, params, grid, cfg)
    ladder = dependence_check(bundle, shifted, params, grid, cfg)
    passed = identical['LHS'] == 0.0 and ladder['passed']
    return _result('dependence_ladder', passed, identical_lhs=identical['LHS'],
                   lhs=list(ladder['table']['LHS']), ratio_spread=ladder['ratio_spread'],
                   lhs_decreasing=ladder['lhs_decreasing'])


def check_reproducibility(config: RunConfig) -> Dict:
    params = config.g
    bundle = heat_bundle(config)
    grid = Grid1D(config.grid.x_min, config.grid.x_max, 121, bundle.T)
    field = solve_pde(bundle, params, grid)
    policy = worst_case_scenario(bundle, field, params)
    first = simulate(bundle, field, params, policy, 500, 50, config.run.seed).to_frame()
    second = simulate(bundle, field, params, policy, 500, 50, config.run.seed).to_frame()
    same = first.to_csv(float_format='%.17g') == second.to_csv(float_format='%.17g')
    return _result('reproducibility', same, rows=len(first))


CHECKS: List[Callable[[RunConfig], Dict]] = [
    check_g_function,
    check_lattice_moments,
    check_feynman_kac,
    check_manufactured,
    check_k_invariants,
    check_classical_identity,
    check_picard,
    check_stitch,
    check_mollifier,
    check_dependence,
    check_reproducibility,
]
