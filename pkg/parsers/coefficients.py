"""
Coefficient bundles (b, h, sigma, f, g, Phi) and sampled assumption checks.
"""
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from calculators.classifier import classify_ratio, is_passing
from errors import ConfigError
from parsers.expression import BinOp, Expr, Num, bind, parse

SLOT_VARIABLES = {
    'b': ('t', 'x', 'y'),
    'h': ('t', 'x', 'y'),
    'sigma': ('t', 'x', 'y'),
    'f': ('t', 'x', 'y', 'z'),
    'g': ('t', 'x', 'y', 'z'),
    'phi': ('x',),
}

SLOTS = tuple(SLOT_VARIABLES)


@dataclass(frozen=True)
class CoefficientBundle:
    """
    Coefficients of the coupled forward-backward system plus assumption constants.

    Slots hold parsed expressions (or any object with `evaluate(env)` and
    `variables()`, e.g. a sampled mollified coefficient).
    """
    b: Expr
    h: Expr
    sigma: Expr
    f: Expr
    g: Expr
    phi: Expr
    L: float = 1.0
    M: float = 10.0
    lam: float = 0.5
    beta: float = 4.0
    T: float = 1.0

    def __post_init__(self):
        for name, value in (('L', self.L), ('lambda', self.lam), ('T', self.T), ('M', self.M)):
            if not value > 0:
                raise ConfigError(f"CoefficientBundle: {name} must be > 0, got {value}")
        if not self.beta > 2:
            raise ConfigError(f"CoefficientBundle: beta must be > 2, got {self.beta}")
        for slot in SLOTS:
            bind(getattr(self, slot), SLOT_VARIABLES[slot], slot=slot)

    @classmethod
    def from_strings(cls, expressions: Dict[str, str], **constants) -> 'CoefficientBundle':
        """
        Build a bundle from expression text.

        Args:
            expressions: slot name -> DSL text; missing slots default to "0" ("1" for sigma)
            constants: L, M, lam, beta, T
        """
        defaults = {'b': '0', 'h': '0', 'sigma': '1', 'f': '0', 'g': '0'}
        slots = {}
        for slot in SLOTS:
            text = expressions.get(slot, defaults.get(slot))
            if text is None:
                raise ConfigError(f"CoefficientBundle: missing expression for '{slot}'")
            slots[slot] = bind(parse(text), SLOT_VARIABLES[slot], slot=slot, source=text)
        return cls(**slots, **constants)

    def with_slots(self, **changes) -> 'CoefficientBundle':
        parsed = {k: parse(v) if isinstance(v, str) else v for k, v in changes.items()}
        return replace(self, **parsed)

    def evaluate(self, slot: str, t=0.0, x=0.0, y=0.0, z=0.0) -> np.ndarray:
        """Evaluate a slot; the result broadcasts to the shape of the arguments."""
        t, x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, x, y, z)))
        env = {'t': t, 'x': x, 'y': y, 'z': z}
        value = getattr(self, slot).evaluate(env)
        return np.broadcast_to(np.asarray(value, dtype=float), x.shape).copy()

    def forward(self, t, x, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(b, h, sigma) at (t, x, y)."""
        return (self.evaluate('b', t, x, y), self.evaluate('h', t, x, y), self.evaluate('sigma', t, x, y))

    def backward(self, t, x, y, z) -> Tuple[np.ndarray, np.ndarray]:
        """(f, g) at (t, x, y, z)."""
        return (self.evaluate('f', t, x, y, z), self.evaluate('g', t, x, y, z))

    def terminal(self, x) -> np.ndarray:
        return self.evaluate('phi', x=x)

    def depends_on(self, slot: str, variable: str) -> bool:
        return variable in getattr(self, slot).variables()

    @property
    def is_decoupled(self) -> bool:
        """True when the forward coefficients do not read y."""
        return not any(self.depends_on(s, 'y') for s in ('b', 'h', 'sigma'))

    def describe(self) -> Dict[str, str]:
        return {slot: str(getattr(self, slot)) for slot in SLOTS}


@dataclass(frozen=True)
class ProbeGrid:
    """Finite probe set for assumption sampling."""
    t_range: Tuple[float, float] = (0.0, 1.0)
    x_range: Tuple[float, float] = (-4.0, 4.0)
    y_range: Tuple[float, float] = (-2.0, 2.0)
    z_range: Tuple[float, float] = (-2.0, 2.0)
    nt: int = 5
    nx: int = 401
    ny: int = 21
    nz: int = 9

    def axes(self) -> Dict[str, np.ndarray]:
        return {
            't': np.linspace(*self.t_range, self.nt),
            'x': np.linspace(*self.x_range, self.nx),
            'y': np.linspace(*self.y_range, self.ny),
            'z': np.linspace(*self.z_range, self.nz),
        }


def _slot_mesh(slot: str, axes: Dict[str, np.ndarray]) -> Tuple[List[str], Dict[str, np.ndarray]]:
    names = list(SLOT_VARIABLES[slot])
    mesh = np.meshgrid(*(axes[n] for n in names), indexing='ij')
    return names, dict(zip(names, mesh))


def _lipschitz_quotient(values: np.ndarray, names: Sequence[str], axes: Dict[str, np.ndarray],
                        along: Sequence[str]) -> float:
    """Worst axis-wise difference quotient of sampled values."""
    worst = 0.0
    for name in along:
        if name not in names:
            continue
        axis = names.index(name)
        spacing = np.diff(axes[name])
        if spacing.size == 0:
            continue
        shape = [1] * values.ndim
        shape[axis] = spacing.size
        quotient = np.abs(np.diff(values, axis=axis)) / spacing.reshape(shape)
        worst = max(worst, float(np.max(quotient)))
    return worst


def verify_assumptions(bundle: CoefficientBundle, probe: Optional[ProbeGrid] = None,
                       tolerance: float = 1e-6, verbose: bool = False) -> Dict:
    """
    Sample the standing assumptions on a probe grid.

    Failures are advisory: the report marks them but nothing is raised.

    Args:
        bundle: Coefficients to check
        probe: Probe set (defaults to ProbeGrid over [0, T])
        tolerance: Relative slack on every ratio
        verbose: Print a warning line per failing clause

    Returns:
        Dict with 'clauses' (one row per clause: worst observed value, bound,
        ratio, status) and 'passed'
    """
    probe = probe or ProbeGrid(t_range=(0.0, bundle.T))
    axes = probe.axes()
    clauses = []

    def add(clause: str, observed: float, bound: float, ratio: float):
        clauses.append({
            'clause': clause,
            'observed': observed,
            'bound': bound,
            'ratio': ratio,
            'status': classify_ratio(ratio, tolerance),
        })

    samples = {}
    for slot in SLOTS:
        names, env = _slot_mesh(slot, axes)
        samples[slot] = (names, env, bundle.evaluate(slot, **env))

    _, _, sigma = samples['sigma']
    min_sigma_sq = float(np.min(sigma ** 2))
    add('sigma_ellipticity', min_sigma_sq, bundle.lam, bundle.lam / min_sigma_sq if min_sigma_sq > 0 else np.inf)
    max_sigma = float(np.max(np.abs(sigma)))
    add('sigma_bound', max_sigma, bundle.M, max_sigma / bundle.M)

    names, _, phi = samples['phi']
    max_phi = float(np.max(np.abs(phi)))
    add('phi_bound', max_phi, bundle.M, max_phi / bundle.M)
    q = _lipschitz_quotient(phi, names, axes, ['x'])
    add('phi_lipschitz', q, bundle.L, q / bundle.L)

    for slot in ('b', 'h', 'sigma'):
        names, _, values = samples[slot]
        q = _lipschitz_quotient(values, names, axes, ['x', 'y'])
        add(f'{slot}_lipschitz', q, bundle.L, q / bundle.L)

    for slot in ('f', 'g'):
        names, env, values = samples[slot]
        q = _lipschitz_quotient(values, names, axes, ['x', 'y', 'z'])
        add(f'{slot}_lipschitz', q, bundle.L, q / bundle.L)
        growth = np.abs(values) / (bundle.L * (1.0 + np.abs(env['y']) + np.abs(env['z'])))
        worst = float(np.max(growth))
        add(f'{slot}_growth', worst, 1.0, worst)

    passed = all(is_passing(c['status']) for c in clauses)
    if verbose:
        for c in clauses:
            if not is_passing(c['status']):
                print(f"   ⚠️  {c['clause']}: observed {c['observed']:.4g} vs bound {c['bound']:.4g} "
                      f"(ratio {c['ratio']:.3f}) - advisory only")
    return {'clauses': clauses, 'passed': passed, 'tolerance': tolerance}


def interpolate_bundle(base: CoefficientBundle, target: CoefficientBundle, eps: float) -> CoefficientBundle:
    """
    Bundle with every slot phi + eps * (phi' - phi).

    Slots that are identical in both bundles are kept as-is so that eps
    ladders only touch the perturbed coefficients.
    """
    slots = {}
    for slot in SLOTS:
        a, b = getattr(base, slot), getattr(target, slot)
        if a == b:
            slots[slot] = a
        else:
            slots[slot] = BinOp('+', a, BinOp('*', Num(float(eps)), BinOp('-', b, a)))
    return replace(base, **slots)


if __name__ == "__main__":
    bundle = CoefficientBundle.from_strings({'phi': 'tanh(x)', 'sigma': '1.0'}, L=1.0, lam=0.5)
    report = verify_assumptions(bundle, verbose=True)
    print("Assumption report:")
    for row in report['clauses']:
        print(f"  {row['clause']:20} observed={row['observed']:.4f} ratio={row['ratio']:.3f} {row['status']}")
