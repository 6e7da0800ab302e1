import math

import numpy as np
import pytest

from models.lattice import SpaceTimeField, TorusGrid
from models.parabolic import EffectiveGradient
from services import parabolic_service, two_scale_service
from services.lattice_service import make_dirichlet

KAPPA = 0.3


def _affine_ubar(dom):
    X = dom.coords()
    frame = 2.0 * X[0] - X[1]
    return SpaceTimeField(dom, -1.0, 0.25, np.stack([frame] * 5))


def _correctors(dom, kappa, values=None, rng=None):
    points = two_scale_service.mesoscopic_points(kappa, dom.dim)
    out = []
    for y in points:
        grid = TorusGrid(dom.dim, 2, tuple(int(c) for c in np.rint(y / dom.eps)))
        shape = (5,) + grid.shape
        data = np.zeros(shape) if rng is None else rng.normal(size=shape)
        out.append(SpaceTimeField(grid, -1.0 / dom.eps ** 2, 0.25 / dom.eps ** 2, data))
    return out


@pytest.fixture
def ubar():
    return _affine_ubar(make_dirichlet(2, 10))


def test_mesoscopic_scale():
    assert two_scale_service.mesoscopic_scale(0.01, 3) == pytest.approx(0.1)
    assert two_scale_service.mesoscopic_scale(0.01, 2) == pytest.approx(0.1 * (1 + math.sqrt(math.log(100))))
    with pytest.raises(ValueError):
        two_scale_service.mesoscopic_scale(1.5, 2)


def test_mesoscopic_points_stay_inside_cube():
    points = two_scale_service.mesoscopic_points(KAPPA, 2)
    assert points.shape == (9, 2)
    assert np.all((points > 0) & (points < 1))
    with pytest.raises(ValueError):
        two_scale_service.mesoscopic_points(1.0, 2)


def test_partition_of_unity_sums_to_one():
    dom = make_dirichlet(2, 10)
    points, chi = two_scale_service.partition_of_unity(dom, KAPPA)
    assert chi.shape == (len(points),) + dom.shape
    assert np.allclose(chi.sum(axis=0), 1.0, atol=1e-12)
    assert chi.min() >= 0.0


@pytest.mark.parametrize("kappa", [0.05, 0.1, 1.0])
def test_partition_needs_mesoscopic_scale(kappa):
    with pytest.raises(ValueError):
        two_scale_service.partition_of_unity(make_dirichlet(2, 10), kappa)


def test_slope_blocks_count_down_from_top():
    edges = two_scale_service.slope_blocks(1.0, KAPPA)
    assert edges[0] == -1.0
    assert edges[-1] == 0.0
    assert np.allclose(np.diff(edges)[1:], 4 * KAPPA ** 2)


def test_local_slopes_of_affine_field(ubar):
    points = two_scale_service.mesoscopic_points(KAPPA, 2)
    edges = two_scale_service.slope_blocks(1.0, KAPPA)
    xi = two_scale_service.local_slopes(ubar, KAPPA, points, edges)
    for j, y in enumerate(points):
        if np.min(np.minimum(y, 1 - y)) < KAPPA - 1e-12:
            assert np.all(xi[:, j] == 0.0)
        else:
            assert np.allclose(xi[:, j], [2.0, -1.0], atol=1e-12)


def test_zero_correctors_leave_ubar_unchanged(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    assert np.array_equal(expansion.w.values, ubar.values)
    assert expansion.mesoscopic_radius == 2


def test_gradient_identity_is_exact(ubar, gaussian, rng):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian,
                                                  correctors=_correctors(ubar.grid, KAPPA, rng=rng))
    total = expansion.weighted_gradient + expansion.slope_remainder + expansion.corrector_remainder
    assert np.allclose(expansion.gradient, total, atol=1e-10)
    assert not np.allclose(expansion.w.values, ubar.values)


def test_build_checks_inputs(ubar, gaussian):
    with pytest.raises(ValueError):
        two_scale_service.build_two_scale(ubar, KAPPA, gaussian)
    with pytest.raises(ValueError):
        two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA)[:3])
    early = SpaceTimeField(ubar.grid, -2.0, 0.25, ubar.values)
    with pytest.raises(ValueError):
        two_scale_service.build_two_scale(early, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))


def test_error_terms_vanish_for_affine_field(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    for b in (0, 1, 5):
        report = two_scale_service.error_terms(expansion, (b, 0))
        assert report.gradient_term < 1e-10
        assert report.slope_term < 1e-10
        assert report.corrector_term == 0.0


def test_error_terms_see_boundary_layer(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    # точка (0.9, 0.9) лежит в пограничном слое, её наклон равен нулю
    corner = int(np.flatnonzero(np.all(np.isclose(expansion.points, 0.9), axis=1))[0])
    report = two_scale_service.error_terms(expansion, (0, corner))
    assert report.slope_term > 0
    assert report.gradient_term > 0


def test_error_terms_reject_unknown_cells(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    with pytest.raises(ValueError):
        two_scale_service.error_terms(expansion, (100, 0))
    with pytest.raises(ValueError):
        two_scale_service.error_terms(expansion, (0, 9))


def test_corrector_term_scales_with_corrector(ubar, gaussian, rng):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian,
                                                  correctors=_correctors(ubar.grid, KAPPA, rng=rng))
    report = two_scale_service.error_terms(expansion, (0, 0))
    assert report.corrector_term > 0


def test_aggregate_covers_all_cells(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    value, reports = two_scale_service.aggregate(expansion)
    assert len(reports) == math.floor(1.0 / KAPPA ** 2) * len(expansion.points)
    assert value == pytest.approx(np.mean([r.value ** 2 for r in reports]))


def test_flux_error_vanishes_for_quadratic(ubar, gaussian):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, gaussian, correctors=_correctors(ubar.grid, KAPPA))
    field = two_scale_service.flux_error_field(expansion, gaussian, EffectiveGradient.identity())
    assert np.all(field == 0.0)
    assert two_scale_service.flux_weak_norm(expansion, gaussian, EffectiveGradient.identity()) == 0.0


def test_flux_error_is_positive_for_nonlinear_potential(ubar, quartic):
    expansion = two_scale_service.build_two_scale(ubar, KAPPA, quartic, correctors=_correctors(ubar.grid, KAPPA))
    assert two_scale_service.flux_weak_norm(expansion, quartic, EffectiveGradient.identity()) > 0


def test_correctors_share_noise_with_dirichlet_window(gaussian, src):
    dom = make_dirichlet(2, 8)
    kappa = 0.5

    def f(t, X):
        return X[0] - X[1]

    ubar, error = parabolic_service.solve_homogenized(EffectiveGradient.identity(), dom, f, horizon=0.02)
    assert error is None
    window = two_scale_service.shared_window(src, dom, kappa)
    assert window.window_origin == (-4, -4)
    assert window.window_shape == (17, 17)
    expansion = two_scale_service.build_two_scale(ubar, kappa, gaussian, window)
    assert len(expansion.correctors) == 1
    corrector = expansion.correctors[0]
    assert corrector.grid.radius == 8
    assert corrector.t_end == pytest.approx(0.0)
    assert np.allclose(expansion.xi[:, 0], [1.0, -1.0], atol=1e-12)
    total = expansion.weighted_gradient + expansion.slope_remainder + expansion.corrector_remainder
    assert np.allclose(expansion.gradient, total, atol=1e-10)
