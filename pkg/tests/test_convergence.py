import numpy as np
import pytest

from calculators.convergence import error_ratios, fitted_order, richardson_order


def test_fitted_order_recovers_exact_power_law():
    steps = [0.1, 0.05, 0.025, 0.0125]
    errors = [3.0 * h ** 2 for h in steps]
    fit = fitted_order(steps, errors)
    assert fit['order'] == pytest.approx(2.0)
    assert fit['constant'] == pytest.approx(3.0)
    assert fit['r2'] == pytest.approx(1.0)


def test_richardson_first_order_sequence():
    # u_h = u + c h with h halving
    values = [1.0 + 0.4, 1.0 + 0.2, 1.0 + 0.1]
    assert richardson_order(*values) == pytest.approx(1.0)


def test_richardson_degenerate():
    assert richardson_order(1.0, 1.0, 1.0) != richardson_order(1.0, 1.0, 1.0)  # nan
    assert richardson_order(2.0, 1.0, 1.0) == float('inf')


def test_error_ratios():
    assert error_ratios([8.0, 4.0, 1.0]) == [2.0, 4.0]
    assert np.isinf(error_ratios([1.0, 0.0])[0])
