"""
Status classification for sampled ratios and cross-checks.
"""
import math


def classify_ratio(ratio: float, tolerance: float = 0.0) -> str:
    """
    Classify an observed/declared ratio.

    Args:
        ratio: Observed quantity over its declared bound (e.g. Lipschitz quotient / L)
        tolerance: Relative slack accepted above 1.0

    Returns:
        Classification: 'PASS', 'MARGINAL' or 'FAIL'
    """
    if ratio is None or not math.isfinite(ratio):
        return 'FAIL'
    if ratio <= 1.0:
        return 'PASS'
    elif ratio <= 1.0 + tolerance:
        return 'MARGINAL'
    else:
        return 'FAIL'


def is_passing(status: str) -> bool:
    return status in ('PASS', 'MARGINAL', 'SKIP')


def classify_check(passed: bool, skipped: bool = False) -> str:
    """Classify a validation check outcome."""
    if skipped:
        return 'SKIP'
    return 'PASS' if passed else 'FAIL'


if __name__ == "__main__":
    print("Testing ratio classifier:")
    for ratio in [0.5, 1.0, 1.005, 1.2, float('nan')]:
        print(f"  {ratio:>6} -> {classify_ratio(ratio, tolerance=0.01)}")
