"""
Smoothing kernel rho(x) = c0 exp(-1/(1-x^2)) on (-1, 1), rho_n(x) = n rho(n x),
and grid convolution with it.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, FrozenSet, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import RegularGridInterpolator

from errors import ResolutionError


def _bump(x):
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    denom = np.where(inside, 1.0 - x * x, 1.0)
    return np.where(inside, np.exp(-1.0 / denom), 0.0)


@lru_cache(maxsize=1)
def kernel_c0() -> float:
    """Normalization 1 / integral of exp(-1/(1-x^2)) over (-1, 1)."""
    mass, _ = quad(lambda s: float(_bump(s)), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return 1.0 / mass


def rho(x) -> np.ndarray:
    return kernel_c0() * _bump(x)


@dataclass(frozen=True)
class MollifierKernel:
    n: int
    c0: float = field(default_factory=kernel_c0)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"mollifier index must be >= 1, got {self.n}")

    def __call__(self, x) -> np.ndarray:
        return self.n * self.c0 * _bump(self.n * np.asarray(x, dtype=float))

    @property
    def radius(self) -> float:
        return 1.0 / self.n

    def weights(self, dx: float) -> np.ndarray:
        """
        Discrete kernel on spacing dx, trapezoid weights, renormalized to mass 1.

        Raises:
            ResolutionError: if dx > 1/(4n) (fewer than 8 samples across the support)
        """
        if dx > 1.0 / (4 * self.n) * (1 + 1e-12):
            raise ResolutionError(
                f"grid spacing {dx:.4g} too coarse for n={self.n}; need dx <= {1.0 / (4 * self.n):.4g}"
            )
        half = int(np.floor(self.radius / dx))
        offsets = np.arange(-half, half + 1) * dx
        w = self(offsets) * dx
        return w / np.sum(w)


def mollify(samples: np.ndarray, dx: float, n: int) -> np.ndarray:
    """
    Convolve uniform-grid samples with rho_n.

    Edges use constant extension of the samples, so the output has the same
    length as the input.

    Args:
        samples: Function values on a uniform grid
        dx: Grid spacing
        n: Smoothing index

    Returns:
        Smoothed samples on the same grid
    """
    samples = np.asarray(samples, dtype=float)
    w = MollifierKernel(n).weights(dx)
    half = (w.size - 1) // 2
    padded = np.pad(samples, half, mode='edge')
    return np.convolve(padded, w, mode='valid')


def mollify_along(values: np.ndarray, dx: float, n: int, axis: int) -> np.ndarray:
    return np.apply_along_axis(mollify, axis, values, dx, n)


def empirical_lipschitz(samples: np.ndarray, dx: float) -> float:
    samples = np.asarray(samples, dtype=float)
    return float(np.max(np.abs(np.diff(samples)))) / dx if samples.size > 1 else 0.0


@dataclass(frozen=True, eq=False)
class SampledCoefficient:
    """
    Coefficient tabulated on a tensor grid, evaluated by multilinear
    interpolation with coordinates clamped to the grid hull.
    """
    names: Tuple[str, ...]
    axes: Tuple[np.ndarray, ...]
    values: np.ndarray
    label: str = 'sampled'

    def __post_init__(self):
        object.__setattr__(self, '_interp', RegularGridInterpolator(self.axes, self.values))

    def evaluate(self, env):
        coords = [np.clip(np.asarray(env[name], dtype=float), ax[0], ax[-1])
                  for name, ax in zip(self.names, self.axes)]
        coords = np.broadcast_arrays(*coords)
        shape = coords[0].shape
        points = np.stack([c.ravel() for c in coords], axis=-1)
        result = self._interp(points).reshape(shape)
        return float(result) if result.ndim == 0 else result

    def variables(self) -> FrozenSet[str]:
        return frozenset(self.names)

    def to_source(self) -> str:
        return f"<{self.label} on {','.join(self.names)}>"

    def __str__(self) -> str:
        return self.to_source()


def mollify_expression(expr, n: int, ranges: Dict[str, Tuple[float, float]],
                       label: Optional[str] = None) -> SampledCoefficient:
    """
    Sample an expression on a tensor grid of the variables it uses and smooth
    it dimension by dimension with rho_n (product kernel).

    Args:
        expr: Coefficient expression
        n: Smoothing index
        ranges: variable -> (lo, hi) sampling range; time is sampled but not smoothed

    Returns:
        SampledCoefficient over the smoothed grid
    """
    names = tuple(sorted(expr.variables(), key='txyz'.index)) or ('x',)
    spacing = 1.0 / (4 * n)
    axes = []
    for name in names:
        lo, hi = ranges[name]
        count = int(np.ceil((hi - lo) / spacing)) + 1
        axes.append(np.linspace(lo, hi, count))
    mesh = np.meshgrid(*axes, indexing='ij')
    env = dict(zip(names, mesh))
    values = np.broadcast_to(np.asarray(expr.evaluate(env), dtype=float), mesh[0].shape).copy()
    for axis, name in enumerate(names):
        if name == 't':
            continue
        dx = axes[axis][1] - axes[axis][0]
        values = mollify_along(values, dx, n, axis)
    return SampledCoefficient(names, tuple(axes), values, label or f"mollified[n={n}] {expr}")


def mollify_bundle(bundle, n: int, ranges: Dict[str, Tuple[float, float]],
                   slots: Sequence[str] = ('b', 'h', 'sigma', 'f', 'g', 'phi')):
    """Bundle whose selected slots are replaced by their mollified versions."""
    changes = {slot: mollify_expression(getattr(bundle, slot), n, ranges) for slot in slots}
    return replace(bundle, **changes)


if __name__ == "__main__":
    print("Testing mollifier:")
    print(f"  c0 = {kernel_c0():.8f}")
    x = np.linspace(-3, 3, 6001)
    for n in [5, 10, 20, 40]:
        smooth = mollify(np.abs(x), x[1] - x[0], n)
        print(f"  n={n:3d}: sup|Phi_n - Phi| = {np.max(np.abs(smooth - np.abs(x))):.5f} (bound {1 / n:.5f})")
