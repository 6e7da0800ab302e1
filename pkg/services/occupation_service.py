import logging
import math
from dataclasses import replace
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from core.worker_pool import map_replicas
from models.lattice import ParabolicCylinder
from models.noise import NoiseSource
from models.occupation import OccupationReport, OccupationSetReport, ProcessSpec
from services import dynamics_service, lattice_service, noise_service
from services.potential_service import quadratic
from utils.fit_utils import fit_linear
from utils.stats_utils import mean_and_se, quantile

logger = logging.getLogger(__name__)

MAX_INTERVALS = 32
TAIL_LEVEL = 0.95
# канал шума для скалярных броуновских траекторий
BROWNIAN_CHANNEL = 2


def trajectory(spec: ProcessSpec, src: NoiseSource):
    """
    Траектория процесса на сетке t_n = n·Δt, n = 0..horizon/Δt.
    brownian: X = x0 + σB; edge_gradient: X_t = p_1 + φ(t, e_1) - φ(t, 0)
    для стационарной динамики Ланжевена на торе радиуса spec.radius.
    Возвращает (значения, шаг записи).
    """
    n_steps = max(1, int(math.ceil(spec.horizon / spec.dt - 1e-9)))
    dt = spec.horizon / n_steps
    if spec.kind == "brownian":
        scalar = replace(src, dt=dt, channel=src.channel + BROWNIAN_CHANNEL)
        steps = spec.volatility * noise_service.brownian_increments(scalar, n_steps)
        return spec.x0 + np.concatenate([[0.0], np.cumsum(steps)]), dt

    V = spec.potential if spec.potential is not None else quadratic()
    grid = lattice_service.make_torus(len(spec.slope), spec.radius)
    Q = ParabolicCylinder(-float(spec.horizon), 0.0, grid)
    field = dynamics_service.run_stationary_periodic(Q, spec.slope, V, src, dt=dt)
    origin = grid.index_of((0,) * grid.dim)
    ahead = grid.index_of((1,) + (0,) * (grid.dim - 1))
    values = field.values[:, ahead] - field.values[:, origin]
    return spec.slope[0] + values, field.dt


def normalize_intervals(intervals) -> tuple:
    """
    Сортирует интервалы (a, b) и склеивает перекрывающиеся; касающиеся интервалы не склеиваются.
    """
    cleaned = []
    for a, b in intervals:
        a, b = float(a), float(b)
        if a > b:
            raise ValueError(f"Interval ({a}, {b}) has its ends reversed")
        if a < b:
            cleaned.append([a, b])
    cleaned.sort()
    merged = []
    for a, b in cleaned:
        if merged and a < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    if len(merged) > MAX_INTERVALS:
        raise ValueError(f"Set has {len(merged)} intervals, at most {MAX_INTERVALS} are supported")
    return tuple((a, b) for a, b in merged)


def occupation_time(X: np.ndarray, dt: float, intervals) -> float:
    """
    ∫ 𝟙_{X_t ∈ A} dt по правилу трапеций для объединения открытых интервалов A.
    """
    inside = np.zeros(X.shape, dtype=bool)
    for a, b in intervals:
        inside |= (X > a) & (X < b)
    return float(np.sum(lattice_service.trapezoid_weights(len(X), dt) * inside))


def _threshold_times(X: np.ndarray, dt: float, thresholds: np.ndarray) -> np.ndarray:
    w = lattice_service.trapezoid_weights(len(X), dt)
    absX = np.abs(X)
    return np.array([float(np.sum(w * (absX < eps))) for eps in thresholds])


def brownian_occupation_oracle(eps: float, horizon: float = 1.0, x0: float = 0.0, volatility: float = 1.0) -> float:
    """
    E ∫₀^T 𝟙_{|x0 + σB_t| < ε} dt = ∫₀^T [Φ((ε - x0)/(σ√t)) - Φ((-ε - x0)/(σ√t))] dt.
    """
    if eps <= 0:
        return 0.0

    def density(t):
        if t <= 0:
            return 1.0 if abs(x0) < eps else 0.0
        s = volatility * math.sqrt(t)
        return float(ndtr((eps - x0) / s) - ndtr((-eps - x0) / s))

    value, _ = quad(density, 0.0, horizon, limit=200)
    return float(value)


def occupation_experiment(spec: ProcessSpec, thresholds: Sequence[float], replicas: int,
                          src: NoiseSource) -> OccupationReport:
    """
    Средние времена пребывания в {|X| < ε} по репликам, прямая mean ≈ slope·ε + intercept
    и 95%-квантиль отношения occupation/ε при каждом ε.
    """
    eps = np.asarray(thresholds, dtype=float)
    if len(eps) < 3:
        raise ValueError(f"Occupation experiment needs at least 3 thresholds, got {len(eps)}")
    if np.any(eps < 0):
        raise ValueError("Occupation thresholds must be nonnegative")
    if replicas < 2:
        raise ValueError("Occupation experiment needs at least two replicas")

    def one(r):
        X, step = trajectory(spec, noise_service.for_replica(src, r))
        return _threshold_times(X, step, eps)

    samples = np.array(map_replicas(one, range(replicas)))
    means, se = mean_and_se(samples)
    slope, intercept, _, _ = fit_linear(eps, means)
    top = float(np.max(means))
    relative = abs(intercept) / top if top > 0 else 0.0
    ratios = np.divide(samples, eps[None], out=np.zeros_like(samples), where=eps[None] > 0)
    tails = quantile(ratios, TAIL_LEVEL, axis=0)
    logger.info(f"Occupation experiment ({spec.kind}): slope={slope:.4g}, relative intercept={relative:.3g}")
    return OccupationReport(eps, means, se, float(slope), float(intercept), float(relative),
                            np.asarray(tails), replicas, float(spec.horizon), samples)


def occupation_on_set(spec: ProcessSpec, intervals, replicas: int, src: NoiseSource) -> OccupationSetReport:
    """
    Среднее время пребывания в объединении интервалов A и отношение mean/|A|.
    """
    if replicas < 2:
        raise ValueError("Occupation on a set needs at least two replicas")
    A = normalize_intervals(intervals)
    measure = float(sum(b - a for a, b in A))

    def one(r):
        X, step = trajectory(spec, noise_service.for_replica(src, r))
        return occupation_time(X, step, A)

    samples = np.array(map_replicas(one, range(replicas)))
    mean, se = mean_and_se(samples)
    ratio = float(mean) / measure if 0 < measure < np.inf else 0.0
    return OccupationSetReport(A, measure, float(mean), float(se), ratio, replicas)
