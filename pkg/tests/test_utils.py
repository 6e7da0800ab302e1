import numpy as np
import pytest

from utils.fit_utils import fit_linear, fit_power_law
from utils.stats_utils import jackknife_variance, mean_and_se, quantile, standard_error


def test_power_law_recovers_exponent():
    xs = np.array([2.0, 4.0, 8.0, 16.0])
    fit = fit_power_law(xs, 3.0 * xs ** -1.5)
    assert fit.exponent == pytest.approx(-1.5, abs=1e-8)
    assert fit.log_prefactor == pytest.approx(np.log(3.0), abs=1e-8)
    assert fit.r2 == pytest.approx(1.0)


def test_power_law_of_constant_has_zero_exponent():
    fit = fit_power_law([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    assert fit.exponent == pytest.approx(0.0, abs=1e-10)


def test_power_law_tolerates_noise(rng):
    xs = np.geomspace(1, 100, 12)
    ys = xs ** 0.5 * np.exp(0.01 * rng.normal(size=xs.size))
    assert fit_power_law(xs, ys).exponent == pytest.approx(0.5, abs=0.1)


@pytest.mark.parametrize(("xs", "ys"), [([1.0, 2.0], [1.0, 2.0]), ([1.0, 2.0, 0.0], [1.0, 1.0, 1.0]),
                                        ([1.0, 2.0, 3.0], [1.0, -1.0, 1.0])])
def test_power_law_rejects_bad_input(xs, ys):
    with pytest.raises(ValueError):
        fit_power_law(xs, ys)


def test_linear_fit():
    slope, intercept, r2, residuals = fit_linear([0.0, 1.0, 2.0], [1.0, 3.0, 5.0])
    assert slope == pytest.approx(2.0)
    assert intercept == pytest.approx(1.0)
    assert r2 == pytest.approx(1.0)
    assert np.allclose(residuals, 0.0, atol=1e-8)
    with pytest.raises(ValueError):
        fit_linear([0.0, np.nan], [1.0, 2.0])


def test_standard_error():
    assert standard_error([1.0, 3.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        standard_error([1.0])
    mean, se = mean_and_se(np.array([[1.0, 2.0], [3.0, 2.0]]))
    assert np.allclose(mean, [2.0, 2.0])
    assert np.allclose(se, [1.0, 0.0])


def test_jackknife_variance(rng):
    samples = rng.normal(scale=2.0, size=400)
    var, se = jackknife_variance(samples)
    assert var == pytest.approx(np.var(samples, ddof=1))
    assert 0 < se < var
    with pytest.raises(ValueError):
        jackknife_variance([1.0, 2.0])


def test_quantile():
    assert quantile(np.arange(101.0), 0.95) == pytest.approx(95.0)
