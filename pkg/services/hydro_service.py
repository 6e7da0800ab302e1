import logging
import math
from typing import Optional, Sequence

import numpy as np

from core.worker_pool import map_replicas
from models.experiment import HydroReport, HydroRow
from models.lattice import EdgeFieldSeries, SpaceTimeField
from models.noise import NoiseSource
from models.parabolic import EffectiveGradient
from models.potential import Potential
from services import dynamics_service, lattice_service, noise_service, norms_service, parabolic_service
from services import two_scale_service
from utils.fit_utils import fit_power_law
from utils.stats_utils import mean_and_se

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")

DEFAULT_RECORDS = 64


def _sin_product(t, X):
    return np.prod(np.sin(np.pi * X), axis=0) * np.exp(t)


def _affine(t, X):
    weights = 1.0 / np.arange(1, X.shape[0] + 1)
    return np.tensordot(weights, X, axes=1)


def _parabolic(t, X):
    # Σx_i² + 2dt точно решает дискретное уравнение теплопроводности
    return np.sum(X ** 2, axis=0) + 2.0 * X.shape[0] * t


BOUNDARY_DATA = {
    "sin_product": _sin_product,
    "affine": _affine,
    "parabolic": _parabolic,
}


def boundary_data(name: str):
    """
    Именованные гладкие граничные данные f(t, X), X — массив координат формы (d, ...).
    """
    try:
        return BOUNDARY_DATA[name]
    except KeyError:
        raise ValueError(f"Unknown boundary data {name!r}; expected one of {sorted(BOUNDARY_DATA)}")


def mesh_size(eps: float) -> int:
    n = int(round(1.0 / eps))
    if n < 2 or abs(n * eps - 1.0) > 1e-9:
        raise ValueError(f"Mesh size must be 1/N with integer N >= 2, got {eps}")
    return n


def log_correction(eps, dim: int):
    eps = np.asarray(eps, dtype=float)
    if dim != 2:
        return np.ones_like(eps)
    return 1.0 + np.sqrt(np.abs(np.log(eps)))


def _aligned(ubar: SpaceTimeField, times: np.ndarray) -> np.ndarray:
    return np.stack([ubar.values[ubar.index_at(t)] for t in times])


def l2_error(u: SpaceTimeField, ubar: SpaceTimeField) -> float:
    """
    ‖u - ū‖_{L̲²(Q^ε)} по внутренним узлам на моментах записи u.
    """
    diff = SpaceTimeField(u.grid, u.t0, u.dt, u.values - _aligned(ubar, u.times))
    return norms_service.lp_norm(diff, None, normalized=True)


def gradient_error(u: SpaceTimeField, expansion) -> float:
    """
    ‖∇^ε u - ∇^ε w^ε‖_{L̲²(Q^ε)} по рёбрам области.
    """
    w = expansion.w
    G = lattice_service.grad_field(u.grid, u.values - _aligned(w, u.times))
    return norms_service.lp_norm(EdgeFieldSeries(u.grid, u.t0, u.dt, G), None, normalized=True)


def _default_dsigma(V: Potential, dsigma: Optional[EffectiveGradient]) -> EffectiveGradient:
    if dsigma is not None:
        return dsigma
    if V.is_gaussian and "mollify" not in V.params:
        return EffectiveGradient.identity()
    raise ValueError(f"Potential {V.name} needs a tabulated effective gradient")


def hydro_limit_experiment(eps_list: Sequence[float], f, V: Potential, replicas: int, src: NoiseSource,
                           dsigma: Optional[EffectiveGradient] = None, dim: int = 2, horizon: float = 1.0,
                           dt: Optional[float] = None, record_dt: Optional[float] = None,
                           with_gradient: bool = False, zero_noise: bool = False) -> HydroReport:
    """
    Для каждого ε: динамика u^ε на Q^ε, однородное решение ū^ε и ошибка ‖u^ε - ū^ε‖ по репликам,
    детерминированная ошибка дискретизации (шум выключен) и, по желанию,
    градиентная ошибка относительно двухмасштабного разложения.
    Подгонка log(ошибка / (1 + |log ε|^{1/2}𝟙_{d=2})) против log ε.
    """
    if isinstance(f, str):
        f = boundary_data(f)
    if len(eps_list) < 3:
        raise ValueError(f"Hydrodynamic experiment needs at least 3 mesh sizes, got {len(eps_list)}")
    if replicas < 1:
        raise ValueError("Replica count must be >= 1")
    dsigma = _default_dsigma(V, dsigma)
    record_dt = horizon / DEFAULT_RECORDS if record_dt is None else float(record_dt)
    rows, messages = [], []
    noise_scale = 0.0 if zero_noise else 1.0

    for eps in sorted(eps_list, reverse=True):
        dom = lattice_service.make_dirichlet(dim, mesh_size(eps))
        ubar, error = parabolic_service.solve_homogenized(dsigma, dom, f, horizon, record_dt=record_dt)
        if error:
            messages.append(f"eps={eps}: {error}")
        quiet = dynamics_service.run_dirichlet(dom, f, V, src, horizon, dt=dt, record_dt=record_dt, noise_scale=0.0)
        deterministic = l2_error(quiet, ubar)
        kappa = math.sqrt(dom.eps)

        def one(r):
            rsrc = noise_service.for_replica(src, r)
            if with_gradient:
                rsrc = two_scale_service.shared_window(rsrc, dom, kappa)
            u = dynamics_service.run_dirichlet(dom, f, V, rsrc, horizon, dt=dt, record_dt=record_dt,
                                               noise_scale=noise_scale)
            grad_err = None
            if with_gradient:
                expansion = two_scale_service.build_two_scale(ubar, kappa, V, rsrc, dt=dt)
                grad_err = gradient_error(u, expansion)
            return l2_error(u, ubar), grad_err

        results = map_replicas(one, range(replicas))
        errors = np.array([e for e, _ in results])
        if replicas >= 2:
            mean, se = mean_and_se(errors)
        else:
            mean, se = float(errors[0]), 0.0
        grad_mean = float(np.mean([g for _, g in results])) if with_gradient else None
        rows.append(HydroRow(float(eps), float(mean), float(se), float(deterministic), grad_mean,
                             replicas, clamped=error is not None))
        logger.info(f"Hydrodynamic limit eps={eps}: error={mean:.4e} +- {se:.2e}, deterministic={deterministic:.3e}")

    xs = np.array([row.eps for row in rows])
    ys = np.array([row.mean_error for row in rows]) / log_correction(xs, dim)
    fit = fit_power_law(xs, ys) if np.all(ys > 0) else None
    if fit is None:
        messages.append("Errors vanish at some mesh size; rate fit skipped")
    for message in messages:
        violations_logger.warning(message)
    return HydroReport(rows, fit, flagged=bool(messages), messages=messages)
