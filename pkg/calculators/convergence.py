"""
Convergence-order estimates for refinement studies.
"""
from typing import Dict, Sequence

import numpy as np
from sklearn.linear_model import LinearRegression


def fitted_order(steps: Sequence[float], errors: Sequence[float]) -> Dict:
    """
    Least-squares slope of log(error) against log(step).

    Args:
        steps: Mesh sizes (dx or dt), any order
        errors: Positive error measurements at those sizes

    Returns:
        Dict with 'order' (slope), 'constant' (exp of intercept) and 'r2'
    """
    h = np.log(np.asarray(steps, dtype=float)).reshape(-1, 1)
    e = np.log(np.asarray(errors, dtype=float))
    model = LinearRegression()
    model.fit(h, e)
    return {
        'order': float(model.coef_[0]),
        'constant': float(np.exp(model.intercept_)),
        'r2': float(model.score(h, e)) if len(e) > 2 else 1.0,
    }


def richardson_order(coarse: float, medium: float, fine: float, ratio: float = 2.0) -> float:
    """
    Observed order from three solutions on meshes refined by `ratio`.

    p = log(|coarse - medium| / |medium - fine|) / log(ratio)
    """
    num = abs(coarse - medium)
    den = abs(medium - fine)
    if den == 0.0:
        return float('inf') if num > 0 else float('nan')
    return float(np.log(num / den) / np.log(ratio))


def error_ratios(errors: Sequence[float]) -> list:
    """Successive error ratios e_k / e_{k+1} along a refinement ladder."""
    errors = list(errors)
    return [errors[i] / errors[i + 1] if errors[i + 1] else float('inf') for i in range(len(errors) - 1)]
