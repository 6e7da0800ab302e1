import logging
from typing import Optional, Sequence

import numpy as np

from core.worker_pool import map_replicas
from models.dynamics import SlopePath, stable_dt
from models.homogenization import (
    CorrectorFluctuationReport,
    CorrectorFluctuationRow,
    FluxDecayReport,
    FluxEstimate,
    HessianEstimate,
    ModulusEstimate,
    SlopeStabilityReport,
)
from models.lattice import EdgeFieldSeries, ParabolicCylinder, SpaceTimeField
from models.noise import NoiseSource
from models.potential import Potential
from services import dynamics_service, lattice_service, noise_service, norms_service, parabolic_service
from utils.fit_utils import fit_linear, fit_power_law
from utils.stats_utils import jackknife_variance, mean_and_se, standard_error

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")


def _slope_dim(p) -> int:
    return p.dim if isinstance(p, SlopePath) else len(np.asarray(p))


def slopes_on_times(p, times: np.ndarray, dim: int) -> np.ndarray:
    """
    Наклон в каждый записанный момент, форма (T, d).
    """
    path = dynamics_service.as_slope_path(p, dim)
    return np.stack([path.at(t) for t in times])


def gradient_series(field: SpaceTimeField, p=None) -> EdgeFieldSeries:
    """
    Ряд ∇v = p(t) + ∇φ по записанным срезам.
    """
    grid = field.grid
    g = lattice_service.grad_field(grid, field.values)
    if p is not None:
        g = g + lattice_service.slope_on_edges(grid, slopes_on_times(p, field.times, grid.dim))
    return EdgeFieldSeries(grid, field.t0, field.dt, g)


def flux_series(field: SpaceTimeField, p, V: Potential) -> EdgeFieldSeries:
    """
    Поток V'(p + ∇φ) по записанным срезам.
    """
    g = gradient_series(field, p)
    return EdgeFieldSeries(g.grid, g.t0, g.dt, V.dV(g.values))


def top_window(grid, radius: int) -> ParabolicCylinder:
    return ParabolicCylinder.q(grid, radius=radius, top=0.0, center=(0,) * grid.dim)


def estimate_tau(p, L: int, V: Potential, replicas: int, src: NoiseSource, dt: Optional[float] = None,
                 record_dt: Optional[float] = 0.25, burn_in: Optional[float] = None) -> FluxEstimate:
    """
    τ_L(p) = E[(V'(p + ∇φ))_{Q_{L/2}}] по стационарным траекториям на Q_L.
    p: вектор или SlopePath; постоянный путь проходит тот же код, что и вектор.
    """
    if replicas < 2:
        raise ValueError("Surface tension estimate needs at least two replicas")
    d = _slope_dim(p)
    grid = lattice_service.make_torus(d, L)
    Q = ParabolicCylinder.q(grid)
    window = top_window(grid, max(1, L // 2))

    def one(r):
        field = dynamics_service.run_stationary_periodic(Q, p, V, noise_service.for_replica(src, r),
                                                         burn_in=burn_in, dt=dt, record_dt=record_dt)
        return lattice_service.cylinder_average(flux_series(field, p, V), window)

    samples = np.array(map_replicas(one, range(replicas)))
    ok = np.all(np.isfinite(samples), axis=1)
    failed = int(np.count_nonzero(~ok))
    if failed:
        violations_logger.warning(f"estimate_tau: {failed} of {replicas} replicas produced non-finite flux averages")
    good = samples[ok]
    if len(good) < 2:
        raise RuntimeError("Fewer than two replicas of the surface tension estimate succeeded")
    mean, se = mean_and_se(good)
    logger.info(f"tau_{L}({p}) = {mean} +/- {se} over {len(good)} replicas")
    return FluxEstimate(p, window, replicas, mean, se, samples, failed)


def _hessian_sample(field: SpaceTimeField, p, V: Potential, window: ParabolicCylinder) -> np.ndarray:
    grid = field.grid
    p = np.asarray(p, dtype=float)
    grads = gradient_series(field, p)
    a = V.d2V(grads.values)
    out = np.zeros((grid.dim, grid.dim))
    for i in range(grid.dim):
        e_i = np.eye(grid.dim)[i]
        w = parabolic_service.solve_linearized_corrector(field, p, e_i, V)
        gw = lattice_service.grad_field(grid, w.values) + lattice_service.slope_on_edges(grid, e_i)
        integrand = EdgeFieldSeries(grid, field.t0, field.dt, a * gw)
        out[i] = lattice_service.cylinder_average(integrand, window)
    return out


def estimate_hessian(p, L: int, V: Potential, replicas: int, src: NoiseSource, dt: Optional[float] = None,
                     record_dt: Optional[float] = None, burn_in: Optional[float] = None) -> HessianEstimate:
    """
    ∂_i τ_L(p)_j = E[(V''(p + ∇φ)(e_i + ∇w_{L,p,e_i}))_{Q_{L/2}}, компонента j].
    """
    if replicas < 2:
        raise ValueError("Hessian estimate needs at least two replicas")
    p = np.asarray(p, dtype=float)
    grid = lattice_service.make_torus(len(p), L)
    Q = ParabolicCylinder.q(grid)
    window = top_window(grid, max(1, L // 2))

    def one(r):
        field = dynamics_service.run_stationary_periodic(Q, p, V, noise_service.for_replica(src, r),
                                                         burn_in=burn_in, dt=dt, record_dt=record_dt)
        return _hessian_sample(field, p, V, window)

    samples = np.array(map_replicas(one, range(replicas)))
    mean, se = mean_and_se(samples)
    estimate = HessianEstimate(p, mean, se, replicas, samples)
    if not estimate.positive:
        violations_logger.warning(f"Hessian estimate at p={p.tolist()} is not positive definite: {estimate.eigenvalues}")
    return estimate


def hessian_consistency(p, h: float, L: int, V: Potential, replicas: int, src: NoiseSource,
                        dt: Optional[float] = None, record_dt: Optional[float] = None):
    """
    Центральная разность (τ_L(p + h e_i) - τ_L(p - h e_i)) / (2h) на общем шуме
    рядом с оценкой estimate_hessian. Возвращает (разностная оценка, оценка через w).
    """
    if h <= 0:
        raise ValueError("Finite-difference step must be positive")
    p = np.asarray(p, dtype=float)
    d = len(p)
    columns = []
    for i in range(d):
        e_i = np.eye(d)[i]
        plus = estimate_tau(p + h * e_i, L, V, replicas, src, dt=dt, record_dt=record_dt)
        minus = estimate_tau(p - h * e_i, L, V, replicas, src, dt=dt, record_dt=record_dt)
        columns.append((plus.samples - minus.samples) / (2.0 * h))
    samples = np.stack(columns, axis=1)
    mean, se = mean_and_se(samples)
    fd = HessianEstimate(p, mean, se, replicas, samples)
    return fd, estimate_hessian(p, L, V, replicas, src, dt=dt, record_dt=record_dt)


def variance_table(samples: np.ndarray):
    """
    Дисперсии по репликам (ось 0), просуммированные по компонентам (последняя ось), с ошибками.
    samples: (R, n_scales, d).
    """
    var, se = jackknife_variance(samples, axis=0)
    return var.sum(axis=-1), np.sqrt(np.sum(se ** 2, axis=-1))


def window_averages(field: SpaceTimeField, p, V: Potential, ells: Sequence[int]):
    """
    Средние потока и градиента по окнам Q_ℓ у вершины цилиндра, формы (n_scales, d).
    """
    flux = flux_series(field, p, V)
    grads = gradient_series(field, None)
    fl, gr = [], []
    for ell in ells:
        window = top_window(field.grid, ell)
        fl.append(lattice_service.cylinder_average(flux, window))
        gr.append(lattice_service.cylinder_average(grads, window))
    return np.array(fl), np.array(gr)


def _safe_power_fit(ells, values):
    if np.any(np.asarray(values) <= 0):
        return None
    return fit_power_law(ells, values)


def flux_decay_experiment(ells: Sequence[int], L: int, V: Potential, replicas: int, src: NoiseSource,
                          dim: int = 2, p=None, dt: Optional[float] = None,
                          record_dt: Optional[float] = 0.25) -> FluxDecayReport:
    """
    Дисперсии (V'(p + ∇φ))_{Q_ℓ} и (∇φ)_{Q_ℓ} по репликам для корректора на Q_L;
    степенная подгонка по ℓ.
    """
    ells = tuple(int(e) for e in ells)
    if len(ells) < 3:
        raise ValueError("Flux decay needs at least three scales")
    if max(ells) > L:
        raise ValueError(f"Largest window {max(ells)} exceeds the corrector radius {L}")
    p = np.zeros(dim) if p is None else np.asarray(p, dtype=float)
    grid = lattice_service.make_torus(dim, L)
    Q = ParabolicCylinder.q(grid)
    record_from = -float(max(ells)) ** 2

    def one(r):
        field = dynamics_service.run_corrector(Q, p, V, noise_service.for_replica(src, r), dt=dt,
                                               record_dt=record_dt, record_from=record_from)
        return window_averages(field, p, V, ells)

    results = map_replicas(one, range(replicas))
    flux = np.array([res[0] for res in results])
    grads = np.array([res[1] for res in results])
    fvar, fse = variance_table(flux)
    gvar, gse = variance_table(grads)
    report = FluxDecayReport(ells, fvar, fse, gvar, gse, _safe_power_fit(ells, fvar), _safe_power_fit(ells, gvar))
    logger.info(f"Flux decay exponent: {report.flux_fit.exponent if report.flux_fit else None}")
    return report


def corrector_fluctuation_experiment(radii: Sequence[int], V: Potential, replicas: int, src: NoiseSource,
                                     dim: int = 2, p=None, dt: Optional[float] = None,
                                     record_dt: Optional[float] = 1.0) -> CorrectorFluctuationReport:
    """
    Для каждого L: Var[φ(0, 0)], среднее ‖φ‖²_{L̲²(Q_L)}, квантиль 99.9% |∇φ| по репликам.
    d = 2: подгонка Var ≈ a + b·log L; d = 3: относительный рост между двумя последними L.
    """
    if replicas < 3:
        raise ValueError("Corrector fluctuations need at least three replicas")
    p = np.zeros(dim) if p is None else np.asarray(p, dtype=float)
    rows = []
    for L in radii:
        grid = lattice_service.make_torus(dim, int(L))
        Q = ParabolicCylinder.q(grid)

        def one(r, Q=Q, grid=grid):
            field = dynamics_service.run_corrector(Q, p, V, noise_service.for_replica(src, r), dt=dt,
                                                   record_dt=record_dt)
            value = field.values[-1][grid.index_of((0,) * dim)]
            l2 = norms_service.lp_norm(field, Q, 2, normalized=True) ** 2
            q999 = float(np.quantile(np.abs(lattice_service.grad_field(grid, field.values)), 0.999))
            return value, l2, q999

        res = np.array(map_replicas(one, range(replicas)))
        var, var_se = jackknife_variance(res[:, 0])
        l2_mean, l2_se = mean_and_se(res[:, 1])
        exact = None
        if V.is_gaussian:
            step = dt or stable_dt(dim, V.c_plus)
            exact = dynamics_service.gaussian_corrector_variance(grid, float(L) ** 2, step)
        rows.append(CorrectorFluctuationRow(int(L), float(var), float(var_se), float(l2_mean), float(l2_se),
                                            float(np.mean(res[:, 2])), exact))
        logger.info(f"Corrector fluctuations L={L}: Var={var:.4g} +/- {var_se:.2g}")

    report = CorrectorFluctuationReport(dim, rows)
    logs = np.log([row.radius for row in rows])
    variances = [row.variance for row in rows]
    if dim == 2 and len(rows) >= 2:
        slope, intercept, r2, _ = fit_linear(logs, variances)
        oracle = None
        if all(row.exact_variance is not None for row in rows):
            oracle = fit_linear(logs, [row.exact_variance for row in rows])[0]
        report = CorrectorFluctuationReport(dim, rows, slope, intercept, r2, oracle)
    elif dim >= 3 and len(rows) >= 2 and rows[-2].variance > 0:
        report = CorrectorFluctuationReport(dim, rows, growth=rows[-1].variance / rows[-2].variance - 1.0)
    return report


def slope_stability_check(q1, q2, L: int, V: Potential, src: NoiseSource, dim: int = 2,
                          dt: Optional[float] = None, record_dt: Optional[float] = 0.25) -> SlopeStabilityReport:
    """
    Два корректора на Λ_{2L} × (-4L², 0) с общим шумом и наклонами q₁, q₂:
    ‖∇φ₁ - ∇φ₂‖_{L̲²(Q_L)} против ‖q₁ - q₂‖_{L̲²(I_L)} + (1/L)(‖φ₁‖ + ‖φ₂‖)_{L̲²(Q_{2L})}.
    """
    grid = lattice_service.make_torus(dim, 2 * L)
    Q = ParabolicCylinder(-4.0 * L ** 2, 0.0, grid)
    window = top_window(grid, L)
    phi1 = dynamics_service.run_corrector(Q, q1, V, src, dt=dt, record_dt=record_dt)
    phi2 = dynamics_service.run_corrector(Q, q2, V, src, dt=dt, record_dt=record_dt)
    diff = EdgeFieldSeries(grid, phi1.t0, phi1.dt,
                           lattice_service.grad_field(grid, phi1.values - phi2.values))
    residual = norms_service.lp_norm(diff, window, 2, normalized=True)

    times = phi1.times[phi1.index_at(window.s_minus):phi1.index_at(window.s_plus) + 1]
    dq = slopes_on_times(q1, times, dim) - slopes_on_times(q2, times, dim)
    w = lattice_service.trapezoid_weights(len(times), phi1.dt)
    slope_term = float(np.sqrt(np.sum(w * np.sum(dq ** 2, axis=1)) / w.sum()))
    corrector_term = (norms_service.lp_norm(phi1, Q, 2, normalized=True)
                      + norms_service.lp_norm(phi2, Q, 2, normalized=True)) / L
    denom = slope_term + corrector_term
    fitted = residual / denom if denom > 0 else 0.0
    return SlopeStabilityReport(residual, slope_term, corrector_term, fitted)


def linearization_modulus(p, qs, L: int, V: Potential, replicas: int, src: NoiseSource,
                          dt: Optional[float] = None, record_dt: Optional[float] = None) -> ModulusEstimate:
    """
    Невязка ‖∇φ(·; q) - ∇φ(·; p) - ∇w_{L,p,q-p}‖_{L̲²(Q_L)} на общем шуме, корректоры из нуля на Q_L.
    """
    if replicas < 2:
        raise ValueError("Linearization modulus needs at least two replicas")
    p = np.asarray(p, dtype=float)
    targets = np.array([np.asarray(q, dtype=float) for q in qs])
    grid = lattice_service.make_torus(len(p), L)
    Q = ParabolicCylinder.q(grid)

    def one(r):
        rsrc = noise_service.for_replica(src, r)
        phi_p = dynamics_service.run_corrector(Q, p, V, rsrc, dt=dt, record_dt=record_dt)
        out = []
        for q in targets:
            phi_q = dynamics_service.run_corrector(Q, q, V, rsrc, dt=dt, record_dt=record_dt)
            w = parabolic_service.solve_linearized_corrector(phi_p, p, q - p, V)
            diff = lattice_service.grad_field(grid, phi_q.values - phi_p.values - w.values)
            out.append(norms_service.lp_norm(EdgeFieldSeries(grid, phi_p.t0, phi_p.dt, diff), Q, 2, normalized=True))
        return out

    samples = np.array(map_replicas(one, range(replicas)))
    residuals, se = samples.mean(axis=0), standard_error(samples)
    distances = np.linalg.norm(targets - p, axis=1)
    return ModulusEstimate(p, targets, distances, residuals, se, replicas)
