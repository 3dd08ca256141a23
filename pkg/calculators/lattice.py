"""
Sublinear expectation on a recombining trinomial lattice.

Level k holds the 2k+1 offsets {-k dx, ..., k dx} with dx = sigma_hi sqrt(dt).
One backward step is

    v_k(x) = max over gamma in {sigma_lo^2, sigma_hi^2} of
             v(x) + p(gamma) [v(x+dx) + v(x-dx) - 2 v(x)],   p(gamma) = gamma dt / (2 dx^2)

so p(sigma_hi^2) = 1/2 and the middle mass 1 - 2p stays in [0, 1]. The
one-step value is linear in gamma, so the max over the interval is attained
at an endpoint.
"""
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from calculators.g_function import GParams, g_argmax
from errors import NumericalBlowUpError, ScenarioError
from parsers.expression import Expr

Terminal = Union[Expr, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Lattice:
    """Value function of the backward recursion on every node."""
    params: GParams
    T: float
    steps: int
    values: Tuple[np.ndarray, ...]   # level k -> 2k+1 values
    policy: Tuple[np.ndarray, ...]   # level k < N -> argmax gamma per node

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def dx(self) -> float:
        return self.params.sigma_hi * np.sqrt(self.dt)

    def offsets(self, k: int) -> np.ndarray:
        return np.arange(-k, k + 1) * self.dx

    def time(self, k: int) -> float:
        return k * self.dt

    @property
    def root_value(self) -> float:
        return float(self.values[0][0])

    def to_frame(self) -> pd.DataFrame:
        """(t, x, v) triples, level by level."""
        frames = []
        for k, level in enumerate(self.values):
            frames.append(pd.DataFrame({
                't': np.full(level.size, self.time(k)),
                'x': self.offsets(k),
                'v': level,
            }))
        return pd.concat(frames, ignore_index=True)


def _validate(T: float, N: int):
    if not (isinstance(N, (int, np.integer)) and N >= 1):
        raise ValueError(f"lattice needs an integer number of steps >= 1, got {N!r}")
    if not (np.isfinite(T) and T > 0):
        raise ValueError(f"lattice horizon must be > 0, got {T!r}")


def _terminal_values(phi: Terminal, x: np.ndarray, T: float) -> np.ndarray:
    if isinstance(phi, Expr):
        values = np.broadcast_to(np.asarray(phi.evaluate({'x': x}), dtype=float), x.shape).copy()
    else:
        values = np.asarray(phi(x), dtype=float) * np.ones_like(x)
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericalBlowUpError(T, float(x[np.argmax(bad)]), what='terminal value')
    return values


def _step(mid: np.ndarray, second: np.ndarray, gamma, dt: float, dx: float) -> np.ndarray:
    p = gamma * dt / (2.0 * dx * dx)
    return mid + p * second


def _backward(params: GParams, terminal: np.ndarray, steps: int, dt: float, dx: float,
              keep_levels: bool = True) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    values = [terminal]
    policy = []
    v = terminal
    for _ in range(steps):
        up, mid, down = v[2:], v[1:-1], v[:-2]
        second = up + down - 2.0 * mid
        gamma = g_argmax(params, second)
        v = _step(mid, second, gamma, dt, dx)
        if keep_levels:
            values.append(v)
            policy.append(np.asarray(gamma, dtype=float) * np.ones_like(v))
    values.reverse()
    policy.reverse()
    if not keep_levels:
        values = [v]
    return values, policy


def conditional_field(params: GParams, phi: Terminal, T: float, N: int) -> Lattice:
    """
    Conditional G-expectation of phi(B_T) on every lattice node.

    Args:
        params: Volatility interval
        phi: Terminal function of x (expression or callable)
        T: Horizon
        N: Number of time steps

    Returns:
        Lattice whose level-k values are E_hat[phi(B_T) | B_{t_k} = x]
    """
    _validate(T, N)
    dt = T / N
    dx = params.sigma_hi * np.sqrt(dt)
    terminal = _terminal_values(phi, np.arange(-N, N + 1) * dx, T)
    values, policy = _backward(params, terminal, N, dt, dx)
    return Lattice(params=params, T=T, steps=N, values=tuple(values), policy=tuple(policy))


def g_expectation(params: GParams, phi: Terminal, T: float, N: int) -> float:
    """E_hat[phi(B_T)] by the lattice recursion (root value)."""
    _validate(T, N)
    dt = T / N
    dx = params.sigma_hi * np.sqrt(dt)
    terminal = _terminal_values(phi, np.arange(-N, N + 1) * dx, T)
    values, _ = _backward(params, terminal, N, dt, dx, keep_levels=False)
    return float(values[0][0])


def conditional_value(lattice: Lattice, k: int, x: float) -> float:
    """Value at level k, node x (x must be a lattice offset)."""
    j = int(round(x / lattice.dx))
    if abs(j) > k or abs(x - j * lattice.dx) > 1e-9 * max(1.0, lattice.dx):
        raise ValueError(f"x={x} is not a node of level {k}")
    return float(lattice.values[k][j + k])


def reroot(lattice: Lattice, k: int) -> float:
    """Run the recursion again from the level-k slice down to the root."""
    values, _ = _backward(lattice.params, lattice.values[k], k, lattice.dt, lattice.dx, keep_levels=False)
    return float(values[0][0])


def scenario_expectation(params: GParams, phi: Terminal, T: float, N: int,
                         gamma: Union[float, Sequence[float], Sequence[np.ndarray]]) -> float:
    """
    Linear expectation under one fixed volatility scenario.

    Args:
        gamma: A constant, one value per level (length N), or a per-node
            policy (level k array of length 2k+1, e.g. Lattice.policy)

    Returns:
        Root value of the linear trinomial recursion
    """
    _validate(T, N)
    dt = T / N
    dx = params.sigma_hi * np.sqrt(dt)
    if np.ndim(gamma) == 0:
        per_level = [float(gamma)] * N
    else:
        per_level = list(gamma)
        if len(per_level) != N:
            raise ScenarioError(f"scenario has {len(per_level)} levels, lattice has {N}")
    tol = 1e-12 * params.gamma_hi
    for g in per_level:
        g = np.asarray(g, dtype=float)
        if np.any(g < params.gamma_lo - tol) or np.any(g > params.gamma_hi + tol):
            raise ScenarioError(f"scenario value outside [{params.gamma_lo}, {params.gamma_hi}]")

    v = _terminal_values(phi, np.arange(-N, N + 1) * dx, T)
    for k in range(N - 1, -1, -1):
        up, mid, down = v[2:], v[1:-1], v[:-2]
        v = _step(mid, up + down - 2.0 * mid, np.asarray(per_level[k], dtype=float), dt, dx)
    return float(v[0])


if __name__ == "__main__":
    params = GParams(0.8, 1.2)
    print("Testing lattice G-expectation:")
    print(f"  E[x]    = {g_expectation(params, lambda x: x, 1.0, 100):+.6f}")
    print(f"  E[x^2]  = {g_expectation(params, lambda x: x ** 2, 1.0, 200):+.6f}  (sigma_hi^2 = 1.44)")
    print(f"  E[-x^2] = {g_expectation(params, lambda x: -x ** 2, 1.0, 200):+.6f}  (-sigma_lo^2 = -0.64)")
