"""
Continuous-dependence harness: the I_alpha functional of two coefficient
bundles and the ratio of solution distance to I_0 + I_a + I_a^{1/(2+a)}
along a shrinking perturbation ladder.

The sublinear expectation is the max over a finite scenario family: the
worst-case feedback of the base run, constant sigma_lo^2 and sigma_hi^2, and
piecewise-constant random scenarios. Both runs share noise and gamma paths.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from calculators.g_function import GParams
from errors import ConfigError, HorizonTooLongError, RegimeError
from parsers.coefficients import CoefficientBundle, interpolate_bundle
from simulation.paths import PathQuadruple, path_noise, simulate
from simulation.scenarios import scenario_family, worst_case_scenario
from solvers.pde_solver import DecouplingField, Grid1D
from solvers.picard import picard_solve

DEFAULT_LADDER = (0.2, 0.1, 0.05, 0.025)
RATIO_SPREAD_LIMIT = 10.0
REGIME_RATIO = 0.5


@dataclass(frozen=True)
class DependenceConfig:
    alpha: float = 0.5
    x0: float = 0.0
    x0_prime: float = 0.0
    n_paths: int = 2000
    n_steps: int = 100
    seed: int = 20240601
    n_random: int = 8
    increments: str = 'bernoulli'

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"DependenceConfig: alpha must be > 0, got {self.alpha}")

    @property
    def exponent(self) -> float:
        return 2.0 + self.alpha

    def check_exponent(self, *bundles: CoefficientBundle):
        beta = min(b.beta for b in bundles)
        if not self.exponent < beta:
            raise ConfigError(f"DependenceConfig: need 2 + alpha < beta, got 2 + {self.alpha} >= {beta}")


@dataclass
class ScenarioRun:
    label: str
    base: PathQuadruple
    other: Optional[PathQuadruple] = None


def solve_system(bundle: CoefficientBundle, params: GParams, grid: Grid1D, enforce_regime: bool = True,
                 tol: float = 1e-10) -> DecouplingField:
    """
    Picard solve on [0, T]; the contraction ratio certifies the small-time regime.

    Raises:
        RegimeError: if the map does not contract with ratio <= 1/2
    """
    try:
        field, state = picard_solve(bundle, params, (0.0, bundle.T), bundle.terminal(grid.x),
                                    grid.with_horizon(0.0, bundle.T, grid.nt), tol=tol)
    except HorizonTooLongError as e:
        raise RegimeError(f"horizon T={bundle.T} outside the small-time regime: {e}")
    if enforce_regime and (state.ratio > REGIME_RATIO or not state.converged):
        raise RegimeError(f"horizon T={bundle.T} outside the small-time regime "
                          f"(ratio {state.ratio:.3f}, converged={state.converged})")
    return field


def base_runs(bundle: CoefficientBundle, field: DecouplingField, params: GParams,
              cfg: DependenceConfig) -> List[ScenarioRun]:
    """Simulate the base system once per scenario of the family with shared noise."""
    xi = path_noise(cfg.seed, cfg.n_paths, cfg.n_steps, cfg.increments, tag='perturb')
    runs = [ScenarioRun('worst', simulate(bundle, field, params, worst_case_scenario(bundle, field, params),
                                          cfg.n_paths, cfg.n_steps, cfg.seed, cfg.x0, xi=xi))]
    for scenario in scenario_family(params, field.grid.T, cfg.seed, cfg.n_random, t0=field.grid.t0,
                                    n_steps=cfg.n_steps):
        runs.append(ScenarioRun(scenario.label, simulate(bundle, field, params, scenario, cfg.n_paths,
                                                         cfg.n_steps, cfg.seed, cfg.x0, xi=xi)))
    return runs


def _hat_power(bundle: CoefficientBundle, other: CoefficientBundle, slot: str, p: float, t, x, y, z=0.0):
    diff = bundle.evaluate(slot, t, x, y, z) - other.evaluate(slot, t, x, y, z)
    return np.abs(diff) ** p


def i_alpha(bundle: CoefficientBundle, other: CoefficientBundle, runs: Sequence[ScenarioRun],
            cfg: DependenceConfig, alpha: Optional[float] = None) -> float:
    """
    |x - x'|^p + E int (|b^|^p + |h^|^p + |sigma^|^p) ds + E |Phi^(X_T)|^p
    + E int (|f^|^p + |g^|^p) ds with p = 2 + alpha, along the base paths.

    Each expectation is the max over the scenario family of the path mean.
    """
    alpha = cfg.alpha if alpha is None else alpha
    p = 2.0 + alpha
    total = abs(cfg.x0 - cfg.x0_prime) ** p
    forward_terms, terminal_terms, backward_terms = [], [], []
    for run in runs:
        paths = run.base
        live = paths.alive
        X, Y, Z = paths.X[live], paths.Y[live], paths.Z[live]
        if X.shape[0] == 0:
            continue
        t = paths.times[None, :-1]
        dt = paths.dt
        Xk, Yk, Zk = X[:, :-1], Y[:, :-1], Z[:, :-1]
        fwd = sum(_hat_power(bundle, other, s, p, t, Xk, Yk) for s in ('b', 'h', 'sigma'))
        bwd = sum(_hat_power(bundle, other, s, p, t, Xk, Yk, Zk) for s in ('f', 'g'))
        phi_hat = np.abs(bundle.terminal(X[:, -1]) - other.terminal(X[:, -1])) ** p
        forward_terms.append(float(np.mean(np.sum(fwd, axis=1) * dt)))
        backward_terms.append(float(np.mean(np.sum(bwd, axis=1) * dt)))
        terminal_terms.append(float(np.mean(phi_hat)))
    for terms in (forward_terms, terminal_terms, backward_terms):
        total += max(terms) if terms else 0.0
    return total


def solution_distance(runs: Sequence[ScenarioRun]) -> Dict:
    """
    E sup|X^|^2 + E sup|Y^|^2 + E int |Z^|^2 dt + E |K^_T|^2 with each E the
    scenario-family max.
    """
    terms = {'X': [], 'Y': [], 'Z': [], 'K': []}
    for run in runs:
        a, b = run.base, run.other
        live = a.alive & b.alive
        terms['X'].append(float(np.mean(np.max((a.X[live] - b.X[live]) ** 2, axis=1))))
        terms['Y'].append(float(np.mean(np.max((a.Y[live] - b.Y[live]) ** 2, axis=1))))
        terms['Z'].append(float(np.mean(np.sum((a.Z[live, :-1] - b.Z[live, :-1]) ** 2, axis=1) * a.dt)))
        terms['K'].append(float(np.mean((a.K[live, -1] - b.K[live, -1]) ** 2)))
    parts = {k: max(v) for k, v in terms.items()}
    parts['LHS'] = parts['X'] + parts['Y'] + parts['Z'] + parts['K']
    return parts


def paired_runs(runs: Sequence[ScenarioRun], other: CoefficientBundle, other_field: DecouplingField,
                params: GParams, cfg: DependenceConfig) -> List[ScenarioRun]:
    """Second system under the same gamma paths and noise as the base runs."""
    paired = []
    for run in runs:
        base = run.base
        partner = simulate(other, other_field, params, base.gamma, cfg.n_paths, cfg.n_steps, cfg.seed,
                           cfg.x0_prime, xi=base.xi)
        paired.append(ScenarioRun(run.label, base, partner))
    return paired


def dependence_point(bundle: CoefficientBundle, other: CoefficientBundle, params: GParams, grid: Grid1D,
                     cfg: DependenceConfig, field: Optional[DecouplingField] = None,
                     runs: Optional[Sequence[ScenarioRun]] = None, enforce_regime: bool = True) -> Dict:
    """LHS, I_0, I_alpha and the ratio R for one pair of systems."""
    cfg.check_exponent(bundle, other)
    field = field or solve_system(bundle, params, grid, enforce_regime)
    runs = runs or base_runs(bundle, field, params, cfg)
    if other == bundle:
        other_field = field
    else:
        other_field = solve_system(other, params, grid, enforce_regime)
    paired = paired_runs(runs, other, other_field, params, cfg)
    distance = solution_distance(paired)
    i0 = i_alpha(bundle, other, runs, cfg, alpha=0.0)
    ia = i_alpha(bundle, other, runs, cfg)
    rhs = i0 + ia + ia ** (1.0 / cfg.exponent)
    exact = distance['LHS'] == 0.0 and rhs == 0.0
    return {
        **distance,
        'I0': i0,
        'I_alpha': ia,
        'RHS': rhs,
        'R': distance['LHS'] / rhs if rhs > 0 else float('nan'),
        'exact_match': exact,
    }


def dependence_check(bundle: CoefficientBundle, target: CoefficientBundle, params: GParams, grid: Grid1D,
                     cfg: DependenceConfig, ladder: Sequence[float] = DEFAULT_LADDER,
                     enforce_regime: bool = True, verbose: bool = False) -> Dict:
    """
    Run the perturbation ladder c_eps = c + eps (c' - c), x0'_eps = x0 + eps (x0' - x0).

    Returns:
        Dict with 'table' (DataFrame, one row per eps), 'lhs_decreasing',
        'ratio_spread', 'passed'
    """
    cfg.check_exponent(bundle, target)
    field = solve_system(bundle, params, grid, enforce_regime)
    runs = base_runs(bundle, field, params, cfg)
    rows = []
    for eps in sorted(ladder, reverse=True):
        other = interpolate_bundle(bundle, target, eps)
        point_cfg = DependenceConfig(cfg.alpha, cfg.x0, cfg.x0 + eps * (cfg.x0_prime - cfg.x0), cfg.n_paths,
                                     cfg.n_steps, cfg.seed, cfg.n_random, cfg.increments)
        point = dependence_point(bundle, other, params, grid, point_cfg, field, runs, enforce_regime)
        rows.append({'eps': eps, **point})
        if verbose:
            print(f"   ✓ eps={eps:<6g} LHS={point['LHS']:.4e}  RHS={point['RHS']:.4e}  R={point['R']:.4f}")

    table = pd.DataFrame(rows)
    lhs = table['LHS'].to_numpy()
    ratios = table['R'].to_numpy()
    finite = ratios[np.isfinite(ratios) & (ratios > 0)]
    decreasing = bool(np.all(np.diff(lhs) < 0))
    spread = float(np.max(finite) / np.min(finite)) if finite.size else float('nan')
    exact = bool(table['exact_match'].all())
    passed = exact or (decreasing and np.isfinite(spread) and spread <= RATIO_SPREAD_LIMIT)
    return {
        'table': table,
        'lhs_decreasing': decreasing,
        'ratio_spread': spread,
        'exact_match': exact,
        'passed': passed,
    }


def linear_growth_oracle(eps: float, a: float, dt: float, n_steps: int) -> float:
    """sup_k |X^_k|^2 for dX = a X dt started eps apart (Euler), a >= 0."""
    return eps ** 2 * (1.0 + a * dt) ** (2 * n_steps)
