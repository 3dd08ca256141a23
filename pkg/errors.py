"""
Exception hierarchy shared by every module.

The CLI maps these to exit codes (see EXIT_CODES).
"""
from typing import Iterable, Optional, Tuple


class LabError(Exception):
    """Base class for all lab errors."""
    exit_code = 1


class ConfigError(LabError):
    """Bad config file: missing section, unknown key or invariant violation."""
    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ''
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(f"{location}{message}")


class ExpressionSyntaxError(LabError):
    """Parse failure. `offset` is the 1-based byte offset into the source."""
    exit_code = 2

    def __init__(self, source: str, offset: int, expected: Iterable[str]):
        self.source = source
        self.offset = offset
        self.expected = sorted(set(expected))
        wanted = ', '.join(f'"{e}"' for e in self.expected)
        super().__init__(f"syntax error at offset {offset} in {source!r}, expected {wanted}")


class UnknownIdentifierError(LabError):
    exit_code = 2

    def __init__(self, name: str, source: str = '', offset: int = 0, slot: Optional[str] = None):
        self.name = name
        self.offset = offset
        self.slot = slot
        where = f" in slot '{slot}'" if slot else ''
        super().__init__(f"unknown identifier \"{name}\"{where} (offset {offset} of {source!r})")


class DomainEvaluationError(LabError):
    """Division by zero, sqrt of a negative, or a non-finite result."""

    def __init__(self, message: str, subexpression: str, point: Optional[dict] = None):
        self.subexpression = subexpression
        self.point = point
        at = f" at {point}" if point else ''
        super().__init__(f"{message} in `{subexpression}`{at}")


class CFLViolationError(LabError):
    exit_code = 3

    def __init__(self, cfl: float, dt: float, dx: float):
        self.cfl = cfl
        self.dt = dt
        self.dx = dx
        super().__init__(
            f"CFL violation: dt*(rate) = {cfl:.4f} > 1 with dt={dt:.3e}, dx={dx:.3e}; "
            f"increase nt or coarsen nx"
        )


class NumericalBlowUpError(LabError):
    exit_code = 3

    def __init__(self, t: float, x: float, what: str = 'u'):
        self.t = t
        self.x = x
        super().__init__(f"non-finite {what} first seen at t={t:.6g}, x={x:.6g}")


class FieldHullError(LabError):
    exit_code = 3

    def __init__(self, message: str, path_id: Optional[int] = None, step: Optional[int] = None):
        self.path_id = path_id
        self.step = step
        super().__init__(message)


class ResolutionError(LabError):
    """Grid too coarse for the mollifier support."""


class HorizonTooLongError(LabError):
    exit_code = 3

    def __init__(self, ratio: float, horizon: Tuple[float, float], cell: Optional[int] = None):
        self.ratio = ratio
        self.horizon = horizon
        self.cell = cell
        where = f" in cell {cell}" if cell is not None else ''
        super().__init__(
            f"Picard map not contracting{where} on [{horizon[0]:.4g}, {horizon[1]:.4g}] "
            f"(ratio {ratio:.3f} >= 1 over 5 iterations); bisect the horizon or lower delta0"
        )


class InnerIterationError(LabError):
    exit_code = 3


class ScenarioError(LabError):
    exit_code = 2


class RegimeError(LabError):
    exit_code = 2


EXIT_CODES = {
    'pass': 0,
    'check_failure': 1,
    'usage': 2,
    'blow_up': 3,
}
