"""
Volatility scenarios: a density gamma(t) in [sigma_lo^2, sigma_hi^2] for
d<B>_t = gamma_t dt, either piecewise constant in time or a state feedback.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from calculators.g_function import GParams, g_argmax
from errors import ScenarioError
from parsers.coefficients import CoefficientBundle
from solvers.pde_solver import DecouplingField, field_derivatives


@dataclass(frozen=True)
class VolatilityScenario:
    """
    Piecewise-constant gamma: values[i] holds on [breakpoints[i], breakpoints[i+1]).
    """
    params: GParams
    breakpoints: Tuple[float, ...]
    values: Tuple[float, ...]
    label: str = 'scenario'

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) + 1:
            raise ScenarioError(f"{self.label}: need len(breakpoints) == len(values) + 1")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ScenarioError(f"{self.label}: breakpoints must be strictly increasing")
        tol = 1e-12 * self.params.gamma_hi
        for value in self.values:
            if not (self.params.gamma_lo - tol <= value <= self.params.gamma_hi + tol):
                raise ScenarioError(
                    f"{self.label}: gamma={value} outside [{self.params.gamma_lo}, {self.params.gamma_hi}]"
                )

    @classmethod
    def constant(cls, params: GParams, gamma: float, T: float, t0: float = 0.0) -> 'VolatilityScenario':
        return cls(params, (t0, T), (float(gamma),), label=f'const:{gamma:g}')

    @classmethod
    def random(cls, params: GParams, T: float, pieces: int, rng: np.random.Generator,
               t0: float = 0.0, label: str = 'random', n_steps: Optional[int] = None) -> 'VolatilityScenario':
        """
        Near-equal pieces with gamma drawn uniformly from the interval.

        With n_steps set, breakpoints sit on the simulation grid t0 + k (T - t0) / n_steps.
        """
        if n_steps is None:
            breakpoints = tuple(np.linspace(t0, T, pieces + 1))
        else:
            if n_steps < 1:
                raise ScenarioError(f"{label}: n_steps must be >= 1")
            pieces = min(pieces, n_steps)
            ks = np.round(np.linspace(0, n_steps, pieces + 1)).astype(int)
            dt = (T - t0) / n_steps
            breakpoints = tuple(float(t0 + k * dt) for k in ks[:-1]) + (float(T),)
        values = tuple(float(v) for v in rng.uniform(params.gamma_lo, params.gamma_hi, pieces))
        return cls(params, breakpoints, values, label=label)

    @classmethod
    def from_csv(cls, path: str, params: GParams, T: float) -> 'VolatilityScenario':
        """Rows (t, gamma): gamma holds from t until the next row, last row until T."""
        df = pd.read_csv(path)
        missing = {'t', 'gamma'} - set(df.columns)
        if missing:
            raise ScenarioError(f"{path}: missing columns {sorted(missing)}")
        df = df.sort_values('t')
        breakpoints = tuple(df['t'].astype(float)) + (float(T),)
        return cls(params, breakpoints, tuple(df['gamma'].astype(float)), label=f'file:{path}')

    def at(self, t) -> np.ndarray:
        index = np.searchsorted(self.breakpoints, t, side='right') - 1
        index = np.clip(index, 0, len(self.values) - 1)
        return np.asarray(self.values)[index]

    def on_grid(self, times: np.ndarray) -> np.ndarray:
        """
        Gamma on each step [t_k, t_{k+1}).

        Raises:
            ScenarioError: if a breakpoint falls strictly inside a step
        """
        times = np.asarray(times, dtype=float)
        dt = np.min(np.diff(times))
        for b in self.breakpoints[1:-1]:
            if np.min(np.abs(times - b)) > 1e-9 * max(1.0, dt):
                raise ScenarioError(f"{self.label}: breakpoint t={b} is not on the simulation grid")
        return self.at(times[:-1] + 1e-9 * dt)


@dataclass(frozen=True)
class FeedbackPolicy:
    """gamma*(t, x) = argmax of 1/2 gamma A with A = u_xx sigma^2 + 2 u_x h + 2 g along the field."""
    bundle: CoefficientBundle
    field: DecouplingField
    params: GParams
    label: str = 'worst'

    def generator_argument(self, t: float, x: np.ndarray) -> np.ndarray:
        u, ux, uxx = field_derivatives(self.field, t, x)
        _, h, sigma = self.bundle.forward(t, x, u)
        _, g = self.bundle.backward(t, x, u, ux * sigma)
        return uxx * sigma ** 2 + 2.0 * ux * h + 2.0 * g

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return g_argmax(self.params, self.generator_argument(t, x))


def worst_case_scenario(bundle: CoefficientBundle, field: DecouplingField, params: GParams) -> FeedbackPolicy:
    """Feedback policy attaining the sup in G along the decoupling field."""
    return FeedbackPolicy(bundle, field, params)


def scenario_family(params: GParams, T: float, seed: int, n_random: int = 8, pieces: int = 4,
                    t0: float = 0.0, n_steps: Optional[int] = None) -> Sequence[VolatilityScenario]:
    """
    Constant sigma_lo^2, constant sigma_hi^2, then n_random piecewise-constant scenarios.

    Pass the Euler step count so random breakpoints land on the simulation grid.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE7]))
    family = [
        VolatilityScenario.constant(params, params.gamma_lo, T, t0),
        VolatilityScenario.constant(params, params.gamma_hi, T, t0),
    ]
    for i in range(n_random):
        scenario = VolatilityScenario.random(params, T, pieces, rng, t0, label=f'random{i}', n_steps=n_steps)
        family.append(scenario)
    return family


def parse_scenario(text: str, params: GParams, T: float, bundle: CoefficientBundle = None,
                   field: DecouplingField = None):
    """CLI form: 'worst', 'const:<gamma>' or 'file:<csv>'."""
    if text == 'worst':
        if bundle is None or field is None:
            raise ScenarioError("'worst' scenario needs a solved decoupling field")
        return worst_case_scenario(bundle, field, params)
    if text.startswith('const:'):
        try:
            gamma = float(text.split(':', 1)[1])
        except ValueError:
            raise ScenarioError(f"bad constant scenario {text!r}")
        return VolatilityScenario.constant(params, gamma, T)
    if text.startswith('file:'):
        return VolatilityScenario.from_csv(text.split(':', 1)[1], params, T)
    raise ScenarioError(f"unknown scenario {text!r}; expected worst, const:<gamma> or file:<csv>")
