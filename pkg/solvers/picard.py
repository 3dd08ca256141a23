"""
Small-time Picard solver for the coupled system on Markovian grid fields.

One application of the map takes a guess y(t, x) for the decoupling field,
freezes the forward coefficients b, h, sigma at y, and solves the backward
equation level by level with a one-step G-expectation. f and g read the
unknown (Y, Z) of the level being solved, so every level carries an inner
fixed point in (Y, Z) with Z = sigma * D_x Y.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from calculators.g_function import GParams, g_eval
from errors import HorizonTooLongError, InnerIterationError, NumericalBlowUpError
from parsers.coefficients import CoefficientBundle
from solvers.pde_solver import DecouplingField, Grid1D, resolve_grid, spatial_derivatives

INNER_TOL = 1e-12
INNER_MAX_ITER = 200
STALL_WINDOW = 5


@dataclass
class IterationState:
    """Outer iteration trace. contraction_history[k] = max |y_{k+1} - y_k|."""
    y: np.ndarray
    iter: int = 0
    contraction_history: List[float] = field(default_factory=list)
    converged: bool = False
    inner_iterations: int = 0
    meta: Dict = field(default_factory=dict)

    @property
    def ratios(self) -> List[float]:
        d = self.contraction_history
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 1e-14]

    @property
    def ratio(self) -> float:
        """Geometric ratio estimate r = median(d_{k+1} / d_k); 0 when the map is constant."""
        ratios = self.ratios
        return float(np.median(ratios)) if ratios else 0.0


def _solve_level(bundle: CoefficientBundle, params: GParams, t: float, x: np.ndarray, v: np.ndarray,
                 coefficients: Tuple[np.ndarray, np.ndarray, np.ndarray], dx: float, dt: float) -> Tuple[np.ndarray, int]:
    """Inner fixed point for one level; damping 1/2 once the residual grows."""
    b, h, sigma = coefficients
    vx, vxx = spatial_derivatives(v, dx)
    base = v + dt * vx * b
    second = vxx * sigma ** 2 + 2.0 * vx * h

    def apply(Y):
        Yx, _ = spatial_derivatives(Y, dx)
        f, g = bundle.backward(t, x, Y, Yx * sigma)
        return base + dt * (g_eval(params, second + 2.0 * g) + f)

    Y = v
    previous = np.inf
    damping = 1.0
    for count in range(1, INNER_MAX_ITER + 1):
        mapped = apply(Y)
        if not np.all(np.isfinite(mapped)):
            raise NumericalBlowUpError(t, float(x[np.argmax(~np.isfinite(mapped))]), what='Y')
        residual = float(np.max(np.abs(mapped - Y)))
        if residual <= INNER_TOL * max(1.0, float(np.max(np.abs(mapped)))):
            return mapped, count
        if residual > previous:
            damping = 0.5
        Y = Y + damping * (mapped - Y)
        previous = residual
    raise InnerIterationError(f"inner (Y, Z) iteration did not reach {INNER_TOL} at t={t:.6g} "
                              f"after {INNER_MAX_ITER} sweeps (last residual {previous:.3e})")


def picard_map(bundle: CoefficientBundle, params: GParams, grid: Grid1D, terminal: np.ndarray,
               y: np.ndarray) -> Tuple[np.ndarray, int]:
    """
    Apply the map once: frozen forward coefficients from y, backward solve.

    Returns:
        (Y on every level, total inner sweeps)
    """
    x = grid.x
    times = grid.times
    Y = np.empty_like(y)
    Y[-1] = terminal
    sweeps = 0
    for k in range(grid.nt - 1, -1, -1):
        coefficients = bundle.forward(times[k + 1], x, y[k + 1])
        Y[k], count = _solve_level(bundle, params, times[k], x, Y[k + 1], coefficients, grid.dx, grid.dt)
        sweeps += count
    return Y, sweeps


def _growth_bound(bundle: CoefficientBundle, params: GParams, terminal: np.ndarray, Y: np.ndarray,
                  grid: Grid1D) -> float:
    """Gronwall bound on |Y| from the growth clause |f|, |g| <= L(1 + |y| + |z|)."""
    Yx, _ = spatial_derivatives(Y, grid.dx)
    _, _, sigma = bundle.forward(grid.times[:, None], grid.x[None, :], Y)
    z_max = float(np.max(np.abs(Yx * sigma)))
    rate = bundle.L * (1.0 + params.gamma_hi)
    horizon = grid.horizon
    return (float(np.max(np.abs(terminal))) + rate * (1.0 + z_max) * horizon) * np.exp(rate * horizon)


def picard_solve(bundle: CoefficientBundle, params: GParams, horizon: Tuple[float, float],
                 terminal: np.ndarray, grid: Grid1D, max_iter: int = 50, tol: float = 1e-8,
                 initial: Optional[np.ndarray] = None, band: Optional[float] = None,
                 cell: Optional[int] = None) -> Tuple[DecouplingField, IterationState]:
    """
    Iterate the Picard map on [t_a, t_b] until the sup-norm update drops below tol.

    Args:
        bundle: Coefficients
        params: Volatility interval
        horizon: (t_a, t_b)
        terminal: Values at t_b on grid.x
        grid: Spatial grid; its nt (0 = CFL choice) is used for the horizon
        max_iter: Outer iteration cap
        tol: Stop when max |y_{k+1} - y_k| <= tol
        initial: Starting guess (levels x nodes); defaults to the terminal on every level
        band: |y| band for the CFL probe
        cell: Cell index reported by errors when called from stitching

    Returns:
        (field on the horizon, IterationState)

    Raises:
        HorizonTooLongError: if d_{k+1}/d_k >= 1 for 5 consecutive iterations
        InnerIterationError: if a level's (Y, Z) fixed point fails
    """
    t_a, t_b = horizon
    if not t_b > t_a:
        raise ValueError(f"picard horizon must have t_b > t_a, got [{t_a}, {t_b}]")
    sub, probe = resolve_grid(bundle, params, grid.with_horizon(t_a, t_b, grid.nt), band)
    terminal = np.asarray(terminal, dtype=float)
    if terminal.shape != (sub.nx,):
        raise ValueError(f"terminal has shape {terminal.shape}, grid needs ({sub.nx},)")

    if initial is None:
        y = np.tile(terminal, (sub.nt + 1, 1))
    else:
        y = np.array(initial, dtype=float)
        if y.shape != (sub.nt + 1, sub.nx):
            raise ValueError(f"initial guess has shape {y.shape}, grid needs {(sub.nt + 1, sub.nx)}")

    state = IterationState(y=y)
    stalled = 0
    for _ in range(max_iter):
        Y, sweeps = picard_map(bundle, params, sub, terminal, state.y)
        state.inner_iterations += sweeps
        d = float(np.max(np.abs(Y - state.y)))
        history = state.contraction_history
        if history and history[-1] > 1e-14 and d / history[-1] >= 1.0:
            stalled += 1
        else:
            stalled = 0
        history.append(d)
        state.y = Y
        if stalled >= STALL_WINDOW:
            raise HorizonTooLongError(state.ratio, (t_a, t_b), cell)
        if d <= tol:
            state.converged = True
            break

    state.iter = max(0, len(state.contraction_history) - 1)
    state.meta.update({
        'ratio': state.ratio,
        'growth_bound': _growth_bound(bundle, params, terminal, state.y, sub),
        'cfl': probe['cfl'],
        'nt': sub.nt,
    })
    state.meta['within_growth_bound'] = bool(np.max(np.abs(state.y)) <= state.meta['growth_bound'])
    result = DecouplingField(sub, state.y.copy(), {
        'm0': float(np.max(np.abs(state.y))),
        'M_lip': float(np.max(np.abs(np.diff(state.y, axis=1)))) / sub.dx,
        'dt': sub.dt,
        'nt': sub.nt,
        'cfl': probe['cfl'],
        'iterations': state.iter,
        'ratio': state.ratio,
        'converged': state.converged,
    })
    return result, state


def estimate_delta(bundle: CoefficientBundle, params: GParams, grid: Grid1D, T_max: float,
                   iterations: int = 10, probes: int = 8, target: float = 0.5) -> Dict:
    """
    Largest horizon h <= T_max (ending at T_max) with ratio <= target over
    `iterations` Picard sweeps, by bisection.

    Returns:
        Dict with 'delta' (0.0 if every probe fails) and 'trace' of (h, ratio, ok)
    """
    if not T_max > 0:
        raise ValueError(f"T_max must be > 0, got {T_max}")
    terminal = bundle.terminal(grid.x)
    trace = []

    def probe(h: float) -> bool:
        try:
            _, state = picard_solve(bundle, params, (T_max - h, T_max), terminal, replace(grid, nt=0),
                                    max_iter=iterations, tol=1e-13)
            ratio = state.ratio
            ok = ratio <= target
        except (HorizonTooLongError, InnerIterationError, NumericalBlowUpError):
            ratio, ok = float('inf'), False
        trace.append({'horizon': h, 'ratio': ratio, 'ok': ok})
        return ok

    if probe(T_max):
        return {'delta': T_max, 'trace': trace}
    lo, hi = 0.0, T_max
    for _ in range(probes):
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return {'delta': lo, 'trace': trace}


if __name__ == "__main__":
    params = GParams(0.8, 1.2)
    bundle = CoefficientBundle.from_strings({
        'b': '0.5*tanh(y)', 'sigma': '1 + 0.2*tanh(y)', 'f': '-0.5*y + 0.2*cos(x)', 'phi': 'tanh(x)',
    }, T=0.05)
    grid = Grid1D(-4.0, 4.0, 81, 0.05)
    result, state = picard_solve(bundle, params, (0.0, 0.05), bundle.terminal(grid.x), grid)
    print("Testing Picard solve:")
    print(f"  iterations = {state.iter}, ratio = {state.ratio:.4f}, converged = {state.converged}")
    print(f"  history = {[f'{d:.2e}' for d in state.contraction_history]}")
