import numpy as np
import pytest

from calculators.classifier import classify_check, classify_ratio, is_passing
from calculators.g_function import GParams, check_properties, g_argmax, g_eval, g_linear
from errors import ConfigError


@pytest.fixture
def params():
    return GParams(0.8, 1.2)


def test_g_eval_positive_negative_zero(params):
    assert g_eval(params, 2.0) == pytest.approx(0.5 * 1.44 * 2.0)
    assert g_eval(params, -1.0) == pytest.approx(-0.5 * 0.64)
    assert g_eval(params, 0.0) == 0.0


def test_g_eval_vectorised(params):
    a = np.array([-2.0, 0.0, 3.0])
    out = g_eval(params, a)
    assert out.shape == (3,)
    np.testing.assert_allclose(out, [-0.64, 0.0, 2.16])


def test_argmax_attains_sup(params):
    a = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(g_linear(g_argmax(params, a), a), g_eval(params, a))


def test_argmax_at_zero_is_sigma_hi_squared(params):
    assert g_argmax(params, 0.0) == pytest.approx(1.44)


def test_classical_case_is_linear():
    params = GParams(1.0, 1.0)
    assert params.is_classical
    for a in (-3.0, 0.5, 7.0):
        assert g_eval(params, a) == pytest.approx(0.5 * a)


@pytest.mark.parametrize("lo,hi", [(0.0, 1.0), (-0.1, 1.0), (1.2, 0.8), (float('nan'), 1.0)])
def test_invalid_interval_rejected(lo, hi):
    with pytest.raises(ConfigError):
        GParams(lo, hi)


def test_contains(params):
    assert params.contains([0.64, 1.0, 1.44])
    assert not params.contains(1.5)


def test_sampled_properties_hold(params):
    report = check_properties(params, n_samples=20_000, seed=1)
    assert report['monotonicity'] == 0.0
    assert report['subadditivity'] == 0.0
    assert report['homogeneity'] == 0.0
    assert report['maximizer'] < 1e-12


def test_classify_ratio():
    assert classify_ratio(0.5) == 'PASS'
    assert classify_ratio(1.005, tolerance=0.01) == 'MARGINAL'
    assert classify_ratio(1.2, tolerance=0.01) == 'FAIL'
    assert classify_ratio(float('nan')) == 'FAIL'


def test_classify_check():
    assert classify_check(True) == 'PASS'
    assert classify_check(False) == 'FAIL'
    assert classify_check(False, skipped=True) == 'SKIP'
    assert is_passing('SKIP') and not is_passing('FAIL')
