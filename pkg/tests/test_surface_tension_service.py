import numpy as np
import pytest

from models.dynamics import SlopePath
from services import lattice_service, surface_tension_service
from services.lattice_service import make_torus


def test_hessian_of_quadratic_is_identity(gaussian, src):
    estimate = surface_tension_service.estimate_hessian((0.3, -0.2), 2, gaussian, 2, src)
    assert np.allclose(estimate.matrix, np.eye(2), atol=1e-12)
    assert np.allclose(estimate.stderr, 0.0, atol=1e-12)
    assert estimate.positive


def test_constant_path_gives_bitwise_identical_estimate(quartic, src):
    by_vector = surface_tension_service.estimate_tau((0.5, 0.0), 2, quartic, 2, src)
    by_path = surface_tension_service.estimate_tau(SlopePath.constant((0.5, 0.0)), 2, quartic, 2, src)
    assert np.array_equal(by_vector.samples, by_path.samples)
    assert not by_vector.flagged


def test_tau_needs_two_replicas(gaussian, src):
    with pytest.raises(ValueError):
        surface_tension_service.estimate_tau((0.0, 0.0), 2, gaussian, 1, src)


@pytest.mark.slow
def test_tau_of_quadratic_is_the_slope(gaussian, src):
    p = np.array([1.0, -0.5])
    estimate = surface_tension_service.estimate_tau(p, 4, gaussian, 24, src)
    assert np.all(np.abs(estimate.mean - p) <= 4.0 * estimate.stderr + 1e-12)


def test_slope_stability_is_exact_for_quadratic(gaussian, src):
    report = surface_tension_service.slope_stability_check((1.0, 0.0), (0.0, 0.5), 2, gaussian, src)
    assert report.residual < 1e-10
    assert report.slope_term == pytest.approx(np.hypot(1.0, 0.5))
    assert report.corrector_term > 0


def test_slope_stability_with_equal_slopes(quartic, src):
    report = surface_tension_service.slope_stability_check((0.5, 0.5), (0.5, 0.5), 2, quartic, src)
    assert report.residual == 0.0
    assert report.slope_term == 0.0


def test_linearization_is_exact_for_quadratic(gaussian, src):
    estimate = surface_tension_service.linearization_modulus((0.0, 0.0), [(0.4, 0.0), (0.1, 0.1)], 2, gaussian, 2, src)
    assert np.all(estimate.residuals < 1e-10)
    assert np.allclose(estimate.distances, [0.4, np.hypot(0.1, 0.1)])


def test_linearization_residual_shrinks_with_distance(quartic, src):
    estimate = surface_tension_service.linearization_modulus((0.0, 0.0), [(1.0, 0.0), (0.1, 0.0)], 2, quartic, 2, src)
    assert estimate.residuals[0] > estimate.residuals[1] >= 0.0


def test_window_averages_of_zero_field(torus, gaussian):
    field = lattice_service.zero_field(torus, -9.0, 0.0, 1.0)
    flux, grads = surface_tension_service.window_averages(field, np.zeros(2), gaussian, [1, 2, 3])
    assert np.all(flux == 0.0)
    assert np.all(grads == 0.0)


def test_variance_table_of_constant_samples():
    var, se = surface_tension_service.variance_table(np.ones((5, 3, 2)))
    assert np.allclose(var, 0.0, atol=1e-12)
    assert var.shape == (3,)


def test_flux_decay_validates_scales(gaussian, src):
    with pytest.raises(ValueError):
        surface_tension_service.flux_decay_experiment([1, 2], 4, gaussian, 3, src)
    with pytest.raises(ValueError):
        surface_tension_service.flux_decay_experiment([1, 2, 8], 4, gaussian, 3, src)


def test_flux_decay_report_shapes(gaussian, src):
    report = surface_tension_service.flux_decay_experiment([1, 2, 3], 3, gaussian, 3, src, record_dt=1.0)
    assert report.flux_variance.shape == (3,)
    assert np.all(report.flux_variance >= 0)
    # для квадратичного V поток равен p + ∇φ
    assert np.allclose(report.flux_variance, report.gradient_variance)


def test_corrector_fluctuations_carry_gaussian_oracle(gaussian, src):
    report = surface_tension_service.corrector_fluctuation_experiment([1, 2], gaussian, 3, src)
    assert [row.radius for row in report.rows] == [1, 2]
    assert all(row.exact_variance > 0 for row in report.rows)
    assert report.oracle_slope is not None
    with pytest.raises(ValueError):
        surface_tension_service.corrector_fluctuation_experiment([1, 2], gaussian, 2, src)


def test_gradient_series_adds_slope(torus):
    field = lattice_service.zero_field(torus, -1.0, 0.0, 0.5)
    series = surface_tension_service.gradient_series(field, (2.0, -1.0))
    assert np.all(series.values[:, 0] == 2.0)
    assert np.all(series.values[:, 1] == -1.0)
    assert make_torus(2, 3) == series.grid
