"""
Four-step path construction: Euler forward diffusion under a volatility
scenario, Y and Z read off the decoupling field, and the K process

    K_{k+1} = K_k + (1/2 gamma_k A_k - G(A_k)) dt,   A = u_xx sigma^2 + 2 u_x h + 2 g.
"""
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from calculators.g_function import GParams, g_eval
from errors import FieldHullError, ScenarioError
from parsers.coefficients import CoefficientBundle
from simulation.scenarios import FeedbackPolicy, VolatilityScenario
from solvers.pde_solver import DecouplingField, field_derivatives

INCREMENTS = ('bernoulli', 'gaussian')

Scenario = Union[VolatilityScenario, FeedbackPolicy, np.ndarray]


def path_rng(seed: int, tag: str, index: int) -> np.random.Generator:
    """Generator for one path: SeedSequence([master seed, crc32(tag), path index])."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(tag.encode()), index]))


def _noise_rows(seed: int, tag: str, start: int, stop: int, n_steps: int, kind: str) -> np.ndarray:
    rows = np.empty((stop - start, n_steps))
    for i in range(start, stop):
        rng = path_rng(seed, tag, i)
        if kind == 'bernoulli':
            rows[i - start] = 2.0 * rng.integers(0, 2, size=n_steps) - 1.0
        else:
            rows[i - start] = rng.standard_normal(n_steps)
    return rows


def path_noise(seed: int, n_paths: int, n_steps: int, kind: str = 'bernoulli',
               tag: str = 'simulate', threads: int = 1) -> np.ndarray:
    """
    Increments xi[path, step]: +/-1 equiprobable or standard normal.

    Row i depends only on (seed, tag, i), so adding paths leaves existing rows unchanged.
    """
    if kind not in INCREMENTS:
        raise ValueError(f"increments must be one of {INCREMENTS}, got {kind!r}")
    if threads <= 1 or n_paths < 2 * threads:
        return _noise_rows(seed, tag, 0, n_paths, n_steps, kind)
    bounds = np.linspace(0, n_paths, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        chunks = pool.map(lambda ab: _noise_rows(seed, tag, ab[0], ab[1], n_steps, kind),
                          zip(bounds[:-1], bounds[1:]))
        return np.vstack(list(chunks))


@dataclass
class PathQuadruple:
    """Simulated (X, Y, Z, K) arrays of shape (n_paths, n_steps + 1)."""
    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    K: np.ndarray
    gamma: np.ndarray            # (n_paths, n_steps) density used on each step
    xi: np.ndarray               # (n_paths, n_steps) increments
    seed: int
    increments: str = 'bernoulli'
    exits: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.X.shape[1] - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def alive(self) -> np.ndarray:
        return np.all(np.isfinite(self.X), axis=1)

    def to_frame(self) -> pd.DataFrame:
        """path_id, t, X, Y, Z, K rows."""
        n, m = self.X.shape
        return pd.DataFrame({
            'path_id': np.repeat(np.arange(n), m),
            't': np.tile(self.times, n),
            'X': self.X.ravel(),
            'Y': self.Y.ravel(),
            'Z': self.Z.ravel(),
            'K': self.K.ravel(),
        })

    def terminal_k_stats(self) -> Dict:
        k_t = self.K[self.alive, -1]
        mean = float(np.mean(k_t)) if k_t.size else float('nan')
        stderr = float(np.std(k_t, ddof=1) / np.sqrt(k_t.size)) if k_t.size > 1 else 0.0
        return {'mean': mean, 'stderr': stderr, 'n': int(k_t.size)}


def _scenario_gamma(scenario: Scenario, params: GParams, times: np.ndarray, n_paths: int) -> Optional[np.ndarray]:
    """Precomputed gamma[path, step], or None for a feedback policy."""
    if isinstance(scenario, FeedbackPolicy):
        return None
    if isinstance(scenario, VolatilityScenario):
        per_step = scenario.on_grid(times)
        return np.broadcast_to(per_step, (n_paths, per_step.size))
    gamma = np.asarray(scenario, dtype=float)
    if gamma.ndim == 1:
        gamma = np.broadcast_to(gamma, (n_paths, gamma.size))
    if gamma.shape != (n_paths, times.size - 1):
        raise ScenarioError(f"gamma array has shape {gamma.shape}, need {(n_paths, times.size - 1)}")
    finite = gamma[np.isfinite(gamma)]
    tol = 1e-12 * params.gamma_hi
    if np.any(finite < params.gamma_lo - tol) or np.any(finite > params.gamma_hi + tol):
        raise ScenarioError(f"gamma array leaves [{params.gamma_lo}, {params.gamma_hi}]")
    return gamma


def simulate(bundle: CoefficientBundle, field: DecouplingField, params: GParams, scenario: Scenario,
             n_paths: int, n_steps: int, seed: int, x0: Union[float, np.ndarray] = 0.0,
             increments: str = 'bernoulli', tag: str = 'simulate', xi: Optional[np.ndarray] = None,
             strict: bool = False, threads: int = 1) -> PathQuadruple:
    """
    Simulate n_paths quadruples over the field's horizon.

    Args:
        bundle: Coefficients
        field: Decoupling field covering the horizon and the simulation range
        params: Volatility interval
        scenario: VolatilityScenario, FeedbackPolicy, or explicit gamma array
        n_paths, n_steps: Ensemble size and Euler steps
        seed: Master seed
        x0: Starting point (scalar or per path)
        increments: 'bernoulli' or 'gaussian'
        tag: Seed-splitting tag; runs sharing a tag share noise
        xi: Explicit increments overriding the seeded ones
        strict: Raise on the first path leaving the field hull instead of flagging it

    Returns:
        PathQuadruple; paths that leave the hull are NaN from the exit step on
        and listed in `exits` as (path id, step)
    """
    grid = field.grid
    times = grid.t0 + (grid.horizon / n_steps) * np.arange(n_steps + 1)
    times[-1] = grid.T
    dt = grid.horizon / n_steps
    if xi is None:
        xi = path_noise(seed, n_paths, n_steps, increments, tag, threads)
    elif xi.shape != (n_paths, n_steps):
        raise ValueError(f"xi has shape {xi.shape}, need {(n_paths, n_steps)}")
    fixed_gamma = _scenario_gamma(scenario, params, times, n_paths)

    X = np.full((n_paths, n_steps + 1), np.nan)
    Y = np.full_like(X, np.nan)
    Z = np.full_like(X, np.nan)
    K = np.full_like(X, np.nan)
    gamma_used = np.full((n_paths, n_steps), np.nan)
    X[:, 0] = x0
    K[:, 0] = 0.0
    exits = []
    alive = np.ones(n_paths, dtype=bool)

    for k in range(n_steps + 1):
        t = times[k]
        x = X[:, k]
        outside = alive & ((x < grid.x_min) | (x > grid.x_max) | ~np.isfinite(x))
        if np.any(outside):
            ids = np.flatnonzero(outside)
            if strict:
                raise FieldHullError(f"path {ids[0]} left the field hull at step {k} (x={x[ids[0]]:.6g})",
                                     path_id=int(ids[0]), step=k)
            exits.extend((int(i), k) for i in ids)
            alive &= ~outside
            X[ids, k:] = np.nan
            K[ids, k:] = np.nan
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        xa = X[idx, k]
        u, ux, uxx = field_derivatives(field, t, xa)
        b, h, sigma = bundle.forward(t, xa, u)
        Y[idx, k] = u
        Z[idx, k] = ux * sigma
        if k == n_steps:
            break
        _, g = bundle.backward(t, xa, u, Z[idx, k])
        A = uxx * sigma ** 2 + 2.0 * ux * h + 2.0 * g
        if fixed_gamma is None:
            gamma = scenario(t, xa)
        else:
            gamma = fixed_gamma[idx, k]
        gamma_used[idx, k] = gamma
        K[idx, k + 1] = K[idx, k] + (0.5 * gamma * A - g_eval(params, A)) * dt
        X[idx, k + 1] = xa + b * dt + h * gamma * dt + sigma * np.sqrt(gamma * dt) * xi[idx, k]

    return PathQuadruple(times, X, Y, Z, K, gamma_used, xi, seed, increments, exits)


def continuity_statistic(paths: PathQuadruple, max_pairs: int = 400) -> float:
    """sup over (s, t) of mean |X_t - X_s|^2 / |t - s| on a subsample of time pairs."""
    X = paths.X[paths.alive]
    if X.shape[0] == 0:
        return float('nan')
    n = paths.n_steps
    stride = max(1, int(np.ceil((n + 1) / np.sqrt(2 * max_pairs))))
    points = np.arange(0, n + 1, stride)
    worst = 0.0
    for i, s in enumerate(points):
        for t in points[i + 1:]:
            value = float(np.mean((X[:, t] - X[:, s]) ** 2)) / (paths.times[t] - paths.times[s])
            worst = max(worst, value)
    return worst


def check_solution(bundle: CoefficientBundle, field: DecouplingField, paths: PathQuadruple,
                   params: Optional[GParams] = None) -> Dict:
    """
    One-step residuals of the backward and forward equations along the paths,
    plus K and terminal diagnostics.

    Backward: |dY_k - (-f dt - g gamma dt + Z sqrt(gamma dt) xi + dK)|
    Forward:  |dX_k - (b dt + h gamma dt + sigma sqrt(gamma dt) xi)|
    """
    if paths.times.size != paths.X.shape[1]:
        raise ValueError("paths are inconsistent: times and X disagree")
    if abs(paths.times[-1] - field.grid.T) > 1e-12 * max(1.0, field.grid.T):
        raise ValueError("paths and field cover different horizons")
    live = paths.alive
    X, Y, Z, K = (a[live] for a in (paths.X, paths.Y, paths.Z, paths.K))
    gamma, xi = paths.gamma[live], paths.xi[live]
    t = paths.times[None, :-1]
    dt = paths.dt

    Xk, Yk, Zk = X[:, :-1], Y[:, :-1], Z[:, :-1]
    f, g = bundle.backward(t, Xk, Yk, Zk)
    b, h, sigma = bundle.forward(t, Xk, Yk)
    noise = np.sqrt(gamma * dt) * xi
    dK = np.diff(K, axis=1)
    backward = np.abs(np.diff(Y, axis=1) - (-f * dt - g * gamma * dt + Zk * noise + dK))
    forward = np.abs(np.diff(X, axis=1) - (b * dt + h * gamma * dt + sigma * noise))

    identity = 0.0
    for k in range(paths.n_steps + 1):
        if X.shape[0]:
            u, _, _ = field_derivatives(field, paths.times[k], X[:, k])
            identity = max(identity, float(np.max(np.abs(Y[:, k] - u))))

    terminal = np.abs(Y[:, -1] - bundle.terminal(X[:, -1])) if X.shape[0] else np.zeros(0)
    report = {
        'n_paths': int(paths.n_paths),
        'n_alive': int(X.shape[0]),
        'n_exits': len(paths.exits),
        'backward_residual_max': float(np.max(backward)) if backward.size else 0.0,
        'backward_residual_mean': float(np.mean(backward)) if backward.size else 0.0,
        'forward_residual_max': float(np.max(forward)) if forward.size else 0.0,
        'y_field_identity': identity,
        'terminal_max': float(np.max(terminal)) if terminal.size else 0.0,
        'k_increment_max': float(np.max(dK)) if dK.size else 0.0,
        'k_nonpositive_fraction': float(np.mean(dK <= 0.0)) if dK.size else 1.0,
        'continuity': continuity_statistic(paths),
    }
    report.update({f'K_T_{k}': v for k, v in paths.terminal_k_stats().items()})
    return report


if __name__ == "__main__":
    from solvers.pde_solver import Grid1D

    params = GParams(0.8, 1.2)
    bundle = CoefficientBundle.from_strings({'phi': 'x^2'})
    grid = Grid1D(-8.0, 8.0, 161, 1.0, nt=200)
    exact = DecouplingField.from_function(grid, lambda t, x: x ** 2 + params.gamma_hi * (1.0 - t))
    for scenario in (FeedbackPolicy(bundle, exact, params), VolatilityScenario.constant(params, params.gamma_lo, 1.0)):
        paths = simulate(bundle, exact, params, scenario, 2000, 100, seed=7)
        stats = paths.terminal_k_stats()
        print(f"{getattr(scenario, 'label', 'scenario'):>10}: mean K_T = {stats['mean']:+.5f} +/- {stats['stderr']:.5f}")
