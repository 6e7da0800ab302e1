import numpy as np
import pytest

from models.lattice import SpaceTimeField
from models.parabolic import EffectiveGradient
from services import dynamics_service, lattice_service, parabolic_service
from services.lattice_service import make_dirichlet, make_torus


def test_heat_kernel_conserves_zero_mass(torus):
    P = parabolic_service.heat_kernel(1.0, torus, 0.0, (0, 0), 4.0)
    assert np.allclose(P.values.reshape(P.values.shape[0], -1).sum(axis=1), 0.0, atol=1e-12)
    assert np.all(P.at(-1.0) == 0.0)


def test_heat_kernel_matches_spectral_solution(torus):
    dt = 1.0 / 16
    P = parabolic_service.heat_kernel(1.0, torus, 0.0, (1, -2), 2.0, dt=dt)
    init = np.full(torus.shape, -1.0 / torus.n_sites)
    init[torus.index_of((1, -2))] += 1.0
    lam = lattice_service.laplacian_eigenvalues(torus)
    expected = np.fft.ifftn((1.0 - dt * lam) ** 32 * np.fft.fftn(init)).real
    assert np.allclose(P.at(2.0), expected, atol=1e-12)


def test_heat_kernel_requires_torus():
    with pytest.raises(ValueError):
        parabolic_service.heat_kernel(1.0, make_dirichlet(2, 4), 0.0, (1, 1), 1.0)


def test_propagate_rejects_unstable_step(torus):
    with pytest.raises(ValueError, match="unstable"):
        parabolic_service.propagate(1.0, torus, np.zeros(torus.shape), 0.0, 1.0, dt=0.5)


def _mean_free_forcing(grid, rng, n):
    values = rng.normal(size=(n,) + grid.shape)
    values -= values.mean(axis=(1, 2), keepdims=True)
    return SpaceTimeField(grid, -1.0, 1.0 / (n - 1), values)


def test_duhamel_matches_direct_solver(torus, rng):
    f = _mean_free_forcing(torus, rng, 33)
    duhamel = parabolic_service.duhamel_solve(1.0, f)
    direct = parabolic_service.solve_linear_parabolic(1.0, None, "periodic", torus, None, -1.0, 0.0,
                                                      dt=f.dt, source=f)
    assert np.allclose(duhamel.values, direct.values, atol=1e-12)


def test_duhamel_rejects_forcing_with_mass(torus):
    f = SpaceTimeField(torus, -1.0, 1.0 / 32, np.ones((33,) + torus.shape))
    with pytest.raises(ValueError):
        parabolic_service.duhamel_solve(1.0, f)


def test_duhamel_caps_superposition_length(torus):
    n = parabolic_service.DUHAMEL_MAX_STEPS + 2
    f = SpaceTimeField(torus, -1.0, 1.0 / 64, np.zeros((n,) + torus.shape))
    with pytest.raises(ValueError, match="solve_linear_parabolic"):
        parabolic_service.duhamel_solve(1.0, f)


def test_solver_checks_boundary_condition(torus, domain):
    with pytest.raises(ValueError):
        parabolic_service.solve_linear_parabolic(1.0, None, "periodic", domain, None, 0.0, 1.0)
    with pytest.raises(ValueError):
        parabolic_service.solve_linear_parabolic(1.0, None, "dirichlet", torus, None, 0.0, 1.0)
    with pytest.raises(ValueError):
        parabolic_service.solve_linear_parabolic(1.0, None, "neumann", torus, None, 0.0, 1.0)


def test_dirichlet_solver_keeps_pinned_values():
    dom = make_dirichlet(2, 6)
    init = np.zeros(dom.shape)
    init[dom.pinned] = 1.0
    w = parabolic_service.solve_linear_parabolic(1.0, None, "dirichlet", dom, init, 0.0, 0.01)
    assert np.all(w.values[-1][dom.pinned] == 1.0)
    assert w.values[-1][dom.interior].max() > 0


def test_linearized_corrector_vanishes_for_quadratic(torus, gaussian, src):
    trajectory = dynamics_service.integrate_torus(torus, -2.0, 0.0, gaussian, src, slope=(0.5, 0.0), record_dt=0.5)
    w = parabolic_service.solve_linearized_corrector(trajectory, (0.5, 0.0), (1.0, 0.0), gaussian)
    assert np.all(w.values == 0.0)


def test_linearized_corrector_is_mean_free(torus, quartic, src):
    trajectory = dynamics_service.integrate_torus(torus, -2.0, 0.0, quartic, src, slope=(0.5, 0.0), record_dt=0.5)
    w = parabolic_service.solve_linearized_corrector(trajectory, (0.5, 0.0), (1.0, 0.0), quartic)
    assert np.allclose(w.values.mean(axis=(1, 2)), 0.0, atol=1e-12)
    assert np.abs(w.values[-1]).max() > 0


def test_homogenized_solution_of_parabolic_data():
    dom = make_dirichlet(2, 6)

    def f(t, X):
        return X[0] ** 2 + X[1] ** 2 + 4.0 * t

    u, error = parabolic_service.solve_homogenized(EffectiveGradient.identity(), dom, f, horizon=0.05)
    assert error is None
    everywhere = np.ones(dom.shape, dtype=bool)
    assert np.allclose(u.values[-1], lattice_service.smoothed_boundary(dom, f, 0.0, mask=everywhere), atol=1e-10)


def test_homogenized_solution_reports_clamping():
    dom = make_dirichlet(2, 4)
    table = EffectiveGradient.tabulated([-0.1, 0.0, 0.1], [-0.1, 0.0, 0.1])

    def f(t, X):
        return np.sin(np.pi * X[0]) * np.sin(np.pi * X[1]) * np.exp(t)

    u, error = parabolic_service.solve_homogenized(table, dom, f, horizon=0.01)
    assert error is not None
    assert u.t_end == pytest.approx(0.0)


def test_tabulated_gradient_is_odd_and_monotone():
    table = EffectiveGradient.tabulated([-1.0, 0.0, 1.0], [-2.0, 0.1, 2.0])
    assert np.allclose(table.values, [-2.0, 0.0, 2.0])
    assert table.lipschitz == pytest.approx(2.0)
    assert table(np.array([0.5, -0.25])) == pytest.approx([1.0, -0.5])
    with pytest.raises(ValueError):
        EffectiveGradient.tabulated([0.0, 0.0], [1.0, 1.0])


def test_nash_aronson_constant_for_constant_coefficients():
    grid = make_torus(2, 4)
    P = parabolic_service.heat_kernel(1.0, grid, 0.0, (0, 0), 16.0)
    C, error = parabolic_service.nash_aronson_fit(P)
    assert error is None
    assert C in parabolic_service.NASH_ARONSON_GRID


def test_torus_distance_uses_minimal_image(torus):
    r = parabolic_service.torus_distance(torus, (3, 0))
    assert r[torus.index_of((-3, 0))] == pytest.approx(1.0)
    assert r[torus.index_of((3, 0))] == 0.0


def test_phi_cl_decays_in_distance():
    values = parabolic_service.phi_cl(2.0, 4, 1.0, np.array([0.0, 1.0, 4.0]), 2)
    assert values[0] > values[1] > values[2] > 0
