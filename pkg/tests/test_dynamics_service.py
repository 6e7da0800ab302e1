import numpy as np
import pytest

from models.dynamics import SimConfig, SlopePath, stable_dt
from models.lattice import ParabolicCylinder
from services import dynamics_service, lattice_service, noise_service
from services.lattice_service import make_dirichlet, make_torus
from utils.stats_utils import standard_error


def test_zero_noise_from_zero_stays_zero(torus, gaussian, src):
    field = dynamics_service.integrate_torus(torus, -4.0, 0.0, gaussian, src, slope=(1.0, 0.5),
                                             record_dt=1.0, noise_scale=0.0)
    assert np.all(field.values == 0.0)
    assert field.t_end == pytest.approx(0.0)


def test_runs_are_reproducible(torus, quartic, src):
    a = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=(0.3, 0.0), record_dt=0.5)
    b = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=(0.3, 0.0), record_dt=0.5)
    assert np.array_equal(a.values, b.values)


def test_constant_path_matches_vector_slope(torus, quartic, src):
    a = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=(0.3, 0.1))
    b = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=SlopePath.constant((0.3, 0.1)))
    assert np.array_equal(a.values, b.values)


def test_mean_is_preserved(torus, quartic, src):
    field = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=(0.5, 0.5), record_dt=0.25)
    assert np.allclose(field.values.mean(axis=(1, 2)), 0.0, atol=1e-12)


def test_recording_ends_at_top(torus, gaussian, src):
    field = dynamics_service.integrate_torus(torus, -3.0, 0.0, gaussian, src, record_from=-1.0, record_dt=0.5)
    assert field.t_end == pytest.approx(0.0)
    assert field.t0 >= -1.0 - 1e-9
    assert field.dt == pytest.approx(0.5)


def test_shared_time_grid_shares_increments(torus, gaussian, src):
    # запуски с разных моментов на одной сетке шагов видят одинаковые приращения
    dt = stable_dt(torus.dim, gaussian.c_plus)
    long = dynamics_service.integrate_torus(torus, -2.0, 0.0, gaussian, src, dt=dt)
    init = dynamics_service.integrate_torus(torus, -2.0, -1.0, gaussian, src, dt=dt).values[-1]
    short = dynamics_service.integrate_torus(torus, -1.0, 0.0, gaussian, src, init=init, dt=dt)
    assert np.allclose(long.values[-1], short.values[-1], atol=1e-12)


def test_unstable_step_is_rejected(torus, gaussian, src):
    with pytest.raises(ValueError, match="unstable"):
        dynamics_service.integrate_torus(torus, -1.0, 0.0, gaussian, src, dt=0.2)


def test_slope_path_must_cover_interval(torus, gaussian, src):
    path = SlopePath.from_arrays([-1.0, 0.0], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        dynamics_service.integrate_torus(torus, -2.0, 0.0, gaussian, src, slope=path)


def test_slope_dimension_is_checked(torus, gaussian, src):
    with pytest.raises(ValueError):
        dynamics_service.integrate_torus(torus, -1.0, 0.0, gaussian, src, slope=(1.0, 0.0, 0.0))


def test_corrector_requires_torus(gaussian, src):
    dom = make_dirichlet(2, 4)
    with pytest.raises(ValueError):
        dynamics_service.run_corrector(ParabolicCylinder(-1.0, 0.0, dom), (0.0, 0.0), gaussian, src)


def test_stationary_run_rejects_short_burn_in(torus, quartic, src):
    Q = ParabolicCylinder.q(torus)
    with pytest.raises(ValueError):
        dynamics_service.run_stationary_periodic(Q, (0.0, 0.0), quartic, src, burn_in=1.0)


def test_gff_sample_has_zero_mean(torus, src):
    phi = dynamics_service.sample_gff(torus, src)
    assert abs(phi.mean()) < 1e-12
    assert phi.std() > 0


def test_gff_covariance_is_mean_free(torus):
    cov = dynamics_service.gff_covariance(torus)
    assert abs(cov.sum()) < 1e-10
    assert cov.flat[0] == cov.max()
    discrete = dynamics_service.gff_covariance(torus, dt=stable_dt(2, 1.0))
    assert discrete.flat[0] > cov.flat[0]


def test_gaussian_variance_approaches_continuous_limit(torus):
    continuous = dynamics_service.gaussian_corrector_variance(torus, 9.0)
    discrete = dynamics_service.gaussian_corrector_variance(torus, 9.0, dt=1.0 / 64)
    assert discrete == pytest.approx(continuous, rel=0.05)


@pytest.mark.slow
def test_corrector_variance_matches_gaussian_formula(gaussian, src):
    grid = make_torus(2, 2)
    horizon, dt = 4.0, stable_dt(2, 1.0)
    values = []
    for r in range(400):
        field = dynamics_service.integrate_torus(grid, -horizon, 0.0, gaussian, src.__class__(src.seed, r), dt=dt)
        values.append(field.values[-1][grid.index_of((0, 0))])
    values = np.array(values)
    exact = dynamics_service.gaussian_corrector_variance(grid, horizon, dt)
    second = values ** 2
    assert abs(second.mean() - exact) < 4.0 * standard_error(second)


def test_parabolic_data_is_stationary_without_noise(gaussian, src):
    dom = make_dirichlet(2, 6)

    def f(t, X):
        return X[0] ** 2 + X[1] ** 2 + 4.0 * t

    u = dynamics_service.run_dirichlet(dom, f, gaussian, src, horizon=0.05, record_dt=0.01, noise_scale=0.0)
    everywhere = np.ones(dom.shape, dtype=bool)
    for t, frame in zip(u.times, u.values):
        assert np.allclose(frame, lattice_service.smoothed_boundary(dom, f, t, mask=everywhere), atol=1e-10)


def test_dirichlet_boundary_is_pinned(quartic, src):
    dom = make_dirichlet(2, 6)

    def f(t, X):
        return np.sin(np.pi * X[0]) * np.exp(t)

    u = dynamics_service.run_dirichlet(dom, f, quartic, src, horizon=0.02)
    pinned = dom.pinned
    assert np.allclose(u.values[-1][pinned], lattice_service.smoothed_boundary(dom, f, 0.0)[pinned])
    assert u.t_end == pytest.approx(0.0)


def test_dirichlet_needs_boundary_data(gaussian, src):
    with pytest.raises(ValueError):
        dynamics_service.run_dirichlet(make_dirichlet(2, 4), None, gaussian, src)


def test_dirichlet_time_step_respects_limit(quartic):
    dom = make_dirichlet(2, 8)
    dt, n = dynamics_service.dirichlet_time_step(dom, quartic, 0.1)
    assert dt <= dom.eps ** 2 / (16 * quartic.c_plus) + 1e-15
    assert n * dt == pytest.approx(0.1)


def test_difference_environment_of_quadratic_is_one(torus, gaussian, src):
    u = dynamics_service.integrate_torus(torus, -1.0, 0.0, gaussian, src, record_dt=0.5)
    v = dynamics_service.integrate_torus(torus, -1.0, 0.0, gaussian, src.__class__(src.seed, 1), record_dt=0.5)
    a = dynamics_service.difference_environment(u, v, gaussian)
    assert np.all(a.values == 1.0)


def test_difference_environment_is_certified(torus, quartic, src):
    u = dynamics_service.integrate_torus(torus, -1.0, 0.0, quartic, src, slope=(1.0, 0.0), record_dt=0.5)
    v = dynamics_service.integrate_torus(torus, -1.0, 0.0, quartic, src, slope=(-1.0, 0.0), record_dt=0.5)
    a = dynamics_service.difference_environment(u, v, quartic, (1.0, 0.0), (-1.0, 0.0))
    assert a.values.min() >= quartic.c_minus
    assert a.values.max() <= quartic.c_plus


def test_sim_config_runs_are_bitwise_reproducible(quartic):
    config = SimConfig(potential=quartic, dim=2, radius=2, horizon=2.0, seed=42, record_dt=0.5)
    first = dynamics_service.simulate(config, replica=1)
    again = dynamics_service.simulate(SimConfig(potential=quartic, dim=2, radius=2, horizon=2.0, seed=42,
                                                record_dt=0.5), replica=1)
    assert np.array_equal(first.values, again.values)
    assert not np.array_equal(first.values, dynamics_service.simulate(config, replica=2).values)
    assert first.times[-1] == pytest.approx(0.0)


def test_sim_config_with_burn_in_is_stationary_run(quartic):
    config = SimConfig(potential=quartic, dim=2, radius=2, horizon=1.0, seed=3, burn_in=4.0)
    field = dynamics_service.simulate(config)
    assert field.t0 == pytest.approx(-1.0, abs=0.07)
    assert np.any(field.values[0] != 0.0)


def test_sim_config_rejects_unstable_step(gaussian):
    with pytest.raises(ValueError, match="unstable"):
        SimConfig(potential=gaussian, dim=2, radius=2, horizon=1.0, seed=1, dt=1.0)


def test_coupled_quadratic_runs_contract(torus, gaussian, src, rng):
    a = dynamics_service.integrate_torus(torus, 0.0, 2.0, gaussian, src, init=rng.normal(size=torus.shape))
    b = dynamics_service.integrate_torus(torus, 0.0, 2.0, gaussian, src, init=rng.normal(size=torus.shape))
    distance = np.sqrt(np.sum((a.values - b.values) ** 2, axis=tuple(range(1, a.values.ndim))))
    assert np.all(np.diff(distance) <= 1e-12)
    assert distance[-1] < distance[0]


def test_gff_dynamic_keeps_zero_mean(torus, src):
    field = dynamics_service.run_gff_dynamic(ParabolicCylinder(0.0, 2.0, torus), src, record_dt=0.5)
    assert field.values.shape[0] == 5
    assert np.allclose(field.values.reshape(5, -1).sum(axis=1), 0.0, atol=1e-9)
    assert np.std(field.values[0]) > 0


def test_single_mode_decays_at_scheme_rate(gaussian, src):
    grid = make_torus(2, 2)
    x1 = np.arange(grid.side)[:, None] * np.ones((1, grid.side))
    init = np.cos(2 * np.pi * x1 / grid.side)
    dt = stable_dt(2, 1.0)
    field = dynamics_service.integrate_torus(grid, 0.0, 2.0, gaussian, src, init=init, dt=dt, record_dt=0.25,
                                             noise_scale=0.0)
    cross, power, lag = dynamics_service.mode_correlations(field, 0.5)
    assert lag == pytest.approx(0.5)
    (decay,) = dynamics_service.mode_decay_rates(grid, cross, power, lag, dt)
    assert decay.eigenvalue == pytest.approx(2 - 2 * np.cos(2 * np.pi / 5))
    assert decay.multiplicity == 4
    assert decay.fitted_rate == pytest.approx(decay.scheme_rate, rel=1e-10)
    assert decay.scheme_rate > decay.eigenvalue
    with pytest.raises(ValueError):
        dynamics_service.mode_correlations(field, 4.0)


def _centered_products(grid, slice_):
    rolled = np.roll(slice_, shift=tuple(-c for c in grid.index_of((0,) * grid.dim)), axis=(0, 1))
    return rolled[0, 0] * rolled


@pytest.mark.slow
def test_gff_sample_matches_green_function(src):
    grid = make_torus(2, 2)
    products = np.array([_centered_products(grid, dynamics_service.sample_gff(grid, noise_service.for_replica(src, r)))
                         for r in range(4000)])
    gap = np.abs(products.mean(axis=0) - dynamics_service.gff_covariance(grid))
    assert np.all(gap <= 4 * standard_error(products) + 1e-12)


@pytest.mark.slow
def test_gff_dynamic_keeps_scheme_covariance(src):
    grid = make_torus(2, 2)
    dt = stable_dt(2, 1.0)
    Q = ParabolicCylinder(0.0, 4.0, grid)
    products = np.array([
        _centered_products(grid, dynamics_service.run_gff_dynamic(Q, noise_service.for_replica(src, r), dt=dt,
                                                                  record_dt=4.0).values[-1])
        for r in range(2000)
    ])
    gap = np.abs(products.mean(axis=0) - dynamics_service.gff_covariance(grid, dt))
    assert np.all(gap <= 4 * standard_error(products) + 1e-12)


@pytest.mark.slow
def test_gff_dynamic_mode_autocorrelation_rate(src):
    grid = make_torus(2, 2)
    dt = stable_dt(2, 1.0)
    Q = ParabolicCylinder(0.0, 4.0, grid)
    cross = np.zeros(grid.shape)
    power = np.zeros(grid.shape)
    for r in range(1000):
        field = dynamics_service.run_gff_dynamic(Q, noise_service.for_replica(src, r), dt=dt, record_dt=0.125)
        c, p, lag = dynamics_service.mode_correlations(field, 0.5)
        cross += c
        power += p
    (decay,) = dynamics_service.mode_decay_rates(grid, cross, power, lag, dt)
    assert decay.relative_error < 0.1
