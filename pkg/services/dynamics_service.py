import logging
import math
from typing import Optional

import numpy as np

from models.dynamics import ModeDecay, SimConfig, SlopePath, stable_dt
from models.lattice import DirichletDomain, EdgeFieldSeries, ParabolicCylinder, SpaceTimeField, TorusGrid
from models.noise import NoiseSource
from models.potential import Potential
from services import lattice_service, noise_service
from services.potential_service import quadratic

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
# узлы и веса на [0, 1]
_S_NODES = 0.5 * (_GL_NODES + 1.0)
_S_WEIGHTS = 0.5 * _GL_WEIGHTS


def as_slope_path(q, dim: int) -> SlopePath:
    if q is None:
        return SlopePath.constant((0.0,) * dim)
    if isinstance(q, SlopePath):
        return q
    q = np.asarray(q, dtype=float)
    if q.shape != (dim,):
        raise ValueError(f"Slope must have {dim} components, got shape {q.shape}")
    return SlopePath.constant(q)


def _step_count(horizon: float, dt: float) -> int:
    return max(1, int(math.ceil(horizon / dt - 1e-9)))


def _check_stable(dt: float, limit: float):
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"unstable time step {dt} > {limit}")


def integrate_torus(grid: TorusGrid, s_minus: float, s_plus: float, V: Potential, src: NoiseSource,
                    slope=None, init: Optional[np.ndarray] = None, dt: Optional[float] = None,
                    record_from: Optional[float] = None, record_dt: Optional[float] = None,
                    noise_scale: float = 1.0) -> SpaceTimeField:
    """
    Явная схема Эйлера–Маруямы для dφ = ∇·V'(q(t) + ∇φ)dt + √2 dB с вычтенным средним шума.
    Абсолютный номер шага k = round(s₋/Δt) + n, поэтому траектории на одном ключе
    и одной сетке времени используют одни и те же приращения.
    Записываются срезы с шагом record_dt, выровненные так, что последний срез — в момент s₊.
    """
    limit = stable_dt(grid.dim, V.c_plus)
    dt = limit if dt is None else float(dt)
    _check_stable(dt, limit)
    path = as_slope_path(slope, grid.dim)
    if not path.covers(s_minus, s_plus):
        raise ValueError(f"Slope path does not cover the time interval ({s_minus}, {s_plus})")
    phi = np.zeros(grid.shape) if init is None else np.array(init, dtype=float)
    if phi.shape != grid.shape:
        raise ValueError(f"Initial slice has shape {phi.shape}, grid expects {grid.shape}")
    phi -= phi.mean()

    horizon = s_plus - s_minus
    if horizon <= 0:
        return SpaceTimeField(grid, s_minus, dt, phi[None].copy())
    n_steps = _step_count(horizon, dt)
    dt = horizon / n_steps
    k0 = int(round(s_minus / dt))
    stride = 1 if record_dt is None else max(1, int(round(record_dt / dt)))
    record_from = s_minus if record_from is None else record_from
    first = n_steps % stride
    while s_minus + first * dt < record_from - 1e-9 * max(1.0, abs(record_from)):
        first += stride
    if first > n_steps:
        raise ValueError(f"Recording start {record_from} lies after the end of the run {s_plus}")

    amplitude = noise_scale * math.sqrt(2.0 * dt)
    frames = [phi.copy()] if first == 0 else []
    for n in range(n_steps):
        t = s_minus + n * dt
        q = path.at(t)
        drift = lattice_service.nonlinear_div_field(grid, V, q, phi)
        phi = phi + dt * drift
        if amplitude:
            phi = phi + amplitude * noise_service.mean_subtracted(src, grid, k0 + n)
        # сохраняем нулевое среднее без накопления ошибок округления
        phi -= phi.mean()
        if n + 1 >= first and (n + 1 - first) % stride == 0:
            frames.append(phi.copy())
    t0 = s_minus + first * dt
    return SpaceTimeField(grid, t0, stride * dt, np.stack(frames))


def run_corrector(Q: ParabolicCylinder, q, V: Potential, src: NoiseSource, dt: Optional[float] = None,
                  record_dt: Optional[float] = None, record_from: Optional[float] = None) -> SpaceTimeField:
    """
    Корректор φ_Q(·, ·; q): старт из нуля в момент s₋, периодические условия, нулевое среднее.
    """
    grid = Q.grid
    if not isinstance(grid, TorusGrid):
        raise ValueError("The corrector lives on a torus")
    if Q.length < grid.radius ** 2:
        logger.debug(f"Corrector cylinder length {Q.length} is shorter than L^2 = {grid.radius ** 2}")
    return integrate_torus(grid, Q.s_minus, Q.s_plus, V, src, slope=q, dt=dt,
                           record_from=record_from, record_dt=record_dt)


def sample_gff(grid: TorusGrid, src: NoiseSource) -> np.ndarray:
    """
    Гауссово свободное поле с нулевым средним спектральным синтезом:
    белый шум → Фурье → деление на √λ_k (k ≠ 0) → обратное преобразование.
    Вещественный белый шум автоматически даёт X_k = conj(X_{-k}).
    """
    white = noise_service.step_noise(src, grid, 0)
    lam = lattice_service.laplacian_eigenvalues(grid)
    scale = np.zeros_like(lam)
    nonzero = lam > 0
    scale[nonzero] = 1.0 / np.sqrt(lam[nonzero])
    field = np.fft.ifftn(np.fft.fftn(white) * scale).real
    return field - field.mean()


def run_gff_dynamic(Q: ParabolicCylinder, src: NoiseSource, dt: Optional[float] = None,
                    record_dt: Optional[float] = None) -> SpaceTimeField:
    """
    Динамика GFF: dψ = Δψ dt + √2 dB (шум без среднего), начальный срез — независимый образец GFF.
    """
    grid = Q.grid
    init = sample_gff(grid, noise_service.independent(src))
    return integrate_torus(grid, Q.s_minus, Q.s_plus, quadratic(), src, init=init, dt=dt, record_dt=record_dt)


def run_stationary_periodic(Q: ParabolicCylinder, p, V: Potential, src: NoiseSource,
                            burn_in: Optional[float] = None, dt: Optional[float] = None,
                            record_dt: Optional[float] = None) -> SpaceTimeField:
    """
    Стационарная траектория на Q с наклоном p (вектор или SlopePath).
    Для квадратичного V начальный срез — точный образец GFF, прогрев не нужен.
    Иначе старт из нуля в момент s₋ - burn_in (burn_in ≥ L²), записывается только Q.
    """
    grid = Q.grid
    L = grid.radius
    if V.is_gaussian and "mollify" not in V.params:
        init = sample_gff(grid, noise_service.independent(src))
        return integrate_torus(grid, Q.s_minus, Q.s_plus, V, src, slope=p, init=init, dt=dt, record_dt=record_dt)
    burn_in = float(L ** 2) if burn_in is None else float(burn_in)
    if burn_in < L ** 2:
        raise ValueError(f"burn_in {burn_in} is shorter than L^2 = {L ** 2}")
    return integrate_torus(grid, Q.s_minus - burn_in, Q.s_plus, V, src, slope=p, dt=dt,
                           record_from=Q.s_minus, record_dt=record_dt)


def dirichlet_time_step(dom: DirichletDomain, V: Potential, horizon: float = 1.0,
                        dt: Optional[float] = None):
    """
    Шаг по времени для динамики в макропеременных: Δt ≤ ε²/(8dc₊), подогнанный к горизонту.
    Возвращает (dt, n_steps).
    """
    limit = dom.eps ** 2 / (8.0 * dom.dim * V.c_plus)
    dt = limit if dt is None else float(dt)
    _check_stable(dt, limit)
    n_steps = _step_count(horizon, dt)
    return horizon / n_steps, n_steps


def run_dirichlet(dom: DirichletDomain, f, V: Potential, src: NoiseSource, horizon: float = 1.0,
                  dt: Optional[float] = None, record_dt: Optional[float] = None,
                  noise_scale: float = 1.0) -> SpaceTimeField:
    """
    Динамика u^ε на Q^ε = (-horizon, 0) × D^ε в макропеременных:
    du = ∇^ε·V'(∇^ε u)dt + √2 ε dB(t/ε²), что на сетке шагов даёт амплитуду √(2Δt).
    Граничные (и угловые) узлы в каждый момент равны f̃_ε.
    Номер шага шума -n_steps + n совпадает с номером шага микроскопической динамики на (-1/ε², 0).
    """
    if f is None:
        raise ValueError("Boundary data is missing")
    dt, n_steps = dirichlet_time_step(dom, V, horizon, dt)
    stride = 1 if record_dt is None else max(1, int(round(record_dt / dt)))
    first = n_steps % stride
    s_minus = -float(horizon)
    interior = dom.interior
    pinned = dom.pinned
    everywhere = np.ones(dom.shape, dtype=bool)

    u = lattice_service.smoothed_boundary(dom, f, s_minus, mask=everywhere)
    amplitude = noise_scale * math.sqrt(2.0 * dt)
    frames = [u.copy()] if first == 0 else []
    for n in range(n_steps):
        drift = lattice_service.nonlinear_div_field(dom, V, None, u)
        u = u + dt * drift
        if amplitude:
            u = u + amplitude * interior * noise_service.step_noise(src, dom, n - n_steps)
        t_next = s_minus + (n + 1) * dt
        u[pinned] = lattice_service.smoothed_boundary(dom, f, t_next)[pinned]
        if n + 1 >= first and (n + 1 - first) % stride == 0:
            frames.append(u.copy())
    logger.debug(f"Dirichlet dynamic finished: N={dom.n}, steps={n_steps}, dt={dt:.3e}")
    return SpaceTimeField(dom, s_minus + first * dt, stride * dt, np.stack(frames))


def difference_environment(u: SpaceTimeField, v: SpaceTimeField, V: Potential,
                           q_u=None, q_v=None) -> EdgeFieldSeries:
    """
    Коэффициенты a(t, e) = ∫₀¹ V''(s∇v + (1-s)∇u) ds, квадратура Гаусса–Лежандра по 8 узлам,
    результат обрезается в [c₋, c₊]. q_u, q_v — наклоны, добавляемые к градиентам на торе.
    """
    if u.values.shape != v.values.shape or abs(u.t0 - v.t0) > 1e-12 or abs(u.dt - v.dt) > 1e-12:
        raise ValueError("Fields of the difference environment must share the cylinder and time grid")
    grid = u.grid
    gu = lattice_service.grad_field(grid, u.values)
    gv = lattice_service.grad_field(grid, v.values)
    if q_u is not None:
        gu = gu + lattice_service.slope_on_edges(grid, q_u)
    if q_v is not None:
        gv = gv + lattice_service.slope_on_edges(grid, q_v)
    a = np.zeros_like(gu)
    for s, w in zip(_S_NODES, _S_WEIGHTS):
        a += w * V.d2V(s * gv + (1.0 - s) * gu)
    return EdgeFieldSeries(grid, u.t0, u.dt, np.clip(a, V.c_minus, V.c_plus))


def gaussian_corrector_variance(grid: TorusGrid, horizon: float, dt: Optional[float] = None) -> float:
    """
    Точная дисперсия φ(T, x) для квадратичного V при старте из нуля.
    dt=None — непрерывное время: Σ_{k≠0} (1 - e^{-2λT}) / (λ|Λ|);
    иначе — дисперсия схемы Эйлера–Маруямы после T/Δt шагов.
    """
    lam = lattice_service.laplacian_eigenvalues(grid).ravel()
    lam = lam[lam > 1e-12]
    if dt is None:
        return float(np.sum((1.0 - np.exp(-2.0 * lam * horizon)) / lam) / grid.n_sites)
    n = _step_count(horizon, dt)
    dt = horizon / n
    rho = (1.0 - dt * lam) ** 2
    return float(np.sum(2.0 * dt * (1.0 - rho ** n) / (1.0 - rho)) / grid.n_sites)


def gff_covariance(grid: TorusGrid, dt: Optional[float] = None) -> np.ndarray:
    """
    Ковариация E[φ(0)φ(x)] стационарного поля как массив по x (индексы массива, 0 — в углу).
    dt=None — точная GFF Σ_{k≠0} e_k(0)ē_k(x)/λ_k; иначе стационарная ковариация явной схемы.
    """
    lam = lattice_service.laplacian_eigenvalues(grid)
    spec = np.zeros_like(lam)
    nonzero = lam > 1e-12
    if dt is None:
        spec[nonzero] = 1.0 / lam[nonzero]
    else:
        spec[nonzero] = 1.0 / (lam[nonzero] * (1.0 - 0.5 * dt * lam[nonzero]))
    return np.fft.ifftn(spec).real


def simulate(config: SimConfig, replica: int = 0) -> SpaceTimeField:
    """
    Одна реплика по SimConfig на торе радиуса config.radius и цилиндре (-horizon, 0].
    С burn_in — стационарная траектория, иначе корректор из нуля.
    """
    grid = lattice_service.make_torus(config.dim, config.radius)
    Q = ParabolicCylinder(-config.horizon, 0.0, grid)
    src = noise_service.for_replica(NoiseSource(seed=config.seed), replica)
    if config.burn_in is not None:
        return run_stationary_periodic(Q, config.slope, config.potential, src, burn_in=config.burn_in,
                                       dt=config.dt, record_dt=config.record_dt)
    return run_corrector(Q, config.slope, config.potential, src, dt=config.dt, record_dt=config.record_dt)


def mode_correlations(field: SpaceTimeField, lag: float):
    """
    Автокорреляция фурье-мод одной траектории на сдвиге lag, усреднённая по всем началам:
    (Re Σ ψ̂_k(t) conj ψ̂_k(t + lag), Σ |ψ̂_k(t)|², фактический сдвиг m·dt записи).
    """
    grid = field.grid
    m = int(round(lag / field.dt))
    if m < 1 or m >= field.n_slices:
        raise ValueError(f"Lag {lag} needs between 1 and {field.n_slices - 1} recorded steps of {field.dt}")
    modes = np.fft.fftn(field.values, axes=tuple(range(1, grid.dim + 1)))
    head, tail = modes[:-m], modes[m:]
    cross = np.mean((head * tail.conj()).real, axis=0)
    power = np.mean(np.abs(head) ** 2, axis=0)
    return cross, power, m * field.dt


def mode_decay_rates(grid: TorusGrid, cross: np.ndarray, power: np.ndarray, lag: float, dt: float,
                     levels: int = 1):
    """
    Подгонка скорости затухания по отношению автокорреляций на `levels` наименьших уровнях λ_k ≠ 0.
    Моды одного уровня (симметричные k) усредняются вместе.
    """
    lam = lattice_service.laplacian_eigenvalues(grid)
    distinct = np.unique(np.round(lam[lam > 1e-12], 10))[:levels]
    rows = []
    for level in distinct:
        mask = np.abs(lam - level) < 1e-9
        ratio = float(cross[mask].sum() / power[mask].sum())
        fitted = -math.log(ratio) / lag if ratio > 0 else float("nan")
        scheme = -math.log(1.0 - dt * level) / dt
        rows.append(ModeDecay(float(level), int(mask.sum()), ratio, fitted, scheme))
        logger.debug(f"Mode level {level:.4f}: fitted rate {fitted:.4f}, scheme rate {scheme:.4f}")
    return rows
