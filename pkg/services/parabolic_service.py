import logging
import math
from typing import Optional

import numpy as np

from models.lattice import DirichletDomain, EdgeFieldSeries, SpaceTimeField, TorusGrid
from models.parabolic import EffectiveGradient, HeatKernelTable
from services import lattice_service

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")

NASH_ARONSON_GRID = (1, 2, 4, 8, 16, 32, 64)
NASH_ARONSON_TOL = 1e-12
DUHAMEL_MAX_STEPS = 2048


def _coefficient_at(a, t: float):
    # a: число, массив (d, *shape) или ряд EdgeFieldSeries
    if isinstance(a, EdgeFieldSeries):
        return a.values[a.index_at(t)]
    return a


def _coefficient_max(a) -> float:
    if isinstance(a, EdgeFieldSeries):
        return float(np.max(a.values))
    return float(np.max(a))


def _stable_limit(grid, c_max: float) -> float:
    limit = 1.0 / (8.0 * grid.dim * c_max)
    if not grid.periodic:
        limit *= grid.eps ** 2
    return limit


def _time_grid(grid, a, s: float, t_end: float, dt: Optional[float]):
    limit = _stable_limit(grid, _coefficient_max(a))
    dt = limit if dt is None else float(dt)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"unstable time step {dt} > {limit}")
    horizon = t_end - s
    if horizon < 0:
        raise ValueError(f"End time {t_end} precedes start time {s}")
    n_steps = int(math.ceil(horizon / dt - 1e-9)) if horizon > 0 else 0
    return (horizon / n_steps if n_steps else dt), n_steps


def linear_operator(grid, a, u: np.ndarray, F=None) -> np.ndarray:
    """
    ∇·(a∇u + F) для одного среза (или стопки срезов по ведущим осям).
    """
    g = a * lattice_service.grad_field(grid, u)
    if F is not None:
        g = g + F
    return lattice_service.divergence_field(grid, g)


def propagate(a, grid, init: np.ndarray, s: float, t_end: float, dt: Optional[float] = None) -> SpaceTimeField:
    """
    Ядерный оператор: явные шаги ∂_t u = ∇·a∇u от начальных данных init в момент s до t_end.
    """
    dt, n_steps = _time_grid(grid, a, s, t_end, dt)
    u = np.array(init, dtype=float)
    frames = [u.copy()]
    for n in range(n_steps):
        u = u + dt * linear_operator(grid, _coefficient_at(a, s + n * dt), u)
        frames.append(u.copy())
    return SpaceTimeField(grid, s, dt, np.stack(frames))


def heat_kernel(a, grid: TorusGrid, s: float, y, t_end: float, dt: Optional[float] = None) -> HeatKernelTable:
    """
    Периодическое ядро P_a(·, ·; s, y) с начальными данными δ_y - 1/|Λ|.
    """
    if not grid.periodic:
        raise ValueError("The periodic heat kernel lives on a torus")
    init = np.full(grid.shape, -1.0 / grid.n_sites)
    init[grid.index_of(y)] += 1.0
    field = propagate(a, grid, init, s, t_end, dt)
    return HeatKernelTable(grid, s, tuple(y), field.dt, field.values, a)


def duhamel_solve(a, f: SpaceTimeField, dt: Optional[float] = None) -> SpaceTimeField:
    """
    Принцип Дюамеля: u(t) = Σ_{s' < t} P_a(t; s') Δt f(s'), u(s) = 0.
    Каждый вклад Δt f(s') переносится ядерным оператором; слагаемые хранятся раздельно
    и складываются на каждом срезе сетки f.
    Стоимость O(n²) по числу шагов n и память O(n) срезов, поэтому n ограничено
    DUHAMEL_MAX_STEPS; для длинных горизонтов служит solve_linear_parabolic с источником.
    """
    grid = f.grid
    sums = f.values.reshape(f.n_slices, -1).sum(axis=1)
    scale = max(1.0, float(np.max(np.abs(f.values)))) * grid.n_sites
    if np.any(np.abs(sums) > 1e-10 * scale):
        raise ValueError("Duhamel forcing must have zero spatial sum on every slice")
    step, n_steps = _time_grid(grid, a, f.t0, f.t_end, f.dt if dt is None else dt)
    if n_steps != f.n_slices - 1:
        raise ValueError("Duhamel forcing must be sampled on the solver time grid")
    if n_steps > DUHAMEL_MAX_STEPS:
        raise ValueError(f"Duhamel superposition is limited to {DUHAMEL_MAX_STEPS} steps, got {n_steps}; "
                         f"use solve_linear_parabolic for long horizons")
    contributions = np.zeros((0,) + grid.shape)
    frames = [np.zeros(grid.shape)]
    for n in range(n_steps):
        coeff = _coefficient_at(a, f.t0 + n * step)
        if len(contributions):
            contributions = contributions + step * linear_operator(grid, coeff, contributions)
        contributions = np.concatenate([contributions, step * f.values[n][None]])
        frames.append(contributions.sum(axis=0))
    return SpaceTimeField(grid, f.t0, step, np.stack(frames))


def solve_linear_parabolic(a, F, bc: str, grid, init: Optional[np.ndarray], s: float, t_end: float,
                           dt: Optional[float] = None, source: Optional[SpaceTimeField] = None) -> SpaceTimeField:
    """
    Явная схема для ∂_t w = ∇·a∇w + ∇·F (+ source). bc: "periodic" или "dirichlet";
    в области Дирихле незакреплённые значения берутся из init и не меняются.
    """
    if bc == "periodic" and not isinstance(grid, TorusGrid):
        raise ValueError("Periodic boundary conditions need a torus")
    if bc == "dirichlet" and not isinstance(grid, DirichletDomain):
        raise ValueError("Dirichlet boundary conditions need a Dirichlet domain")
    if bc not in ("periodic", "dirichlet"):
        raise ValueError(f"Unknown boundary condition: {bc}")
    dt, n_steps = _time_grid(grid, a, s, t_end, dt)
    w = np.zeros(grid.shape) if init is None else np.array(init, dtype=float)
    frames = [w.copy()]
    for n in range(n_steps):
        t = s + n * dt
        rhs = linear_operator(grid, _coefficient_at(a, t), w, _coefficient_at(F, t) if F is not None else None)
        if source is not None:
            rhs = rhs + source.slice_at(t)
        if bc == "dirichlet":
            rhs = rhs * grid.interior
        w = w + dt * rhs
        frames.append(w.copy())
    return SpaceTimeField(grid, s, dt, np.stack(frames))


def solve_linearized_corrector(trajectory: SpaceTimeField, p, xi, V) -> SpaceTimeField:
    """
    Линеаризованный корректор w_{L,p,ξ}: ∂_t w - ∇·a∇w = ∇·aξ, a = V''(p + ∇φ), w(s₋) = 0.
    Коэффициенты постоянны на каждом записанном интервале траектории; при грубой записи
    интервал делится на устойчивые подшаги.
    """
    grid = trajectory.grid
    if not isinstance(grid, TorusGrid):
        raise ValueError("The linearized corrector lives on a torus")
    p = np.asarray(p, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if p.shape != (grid.dim,) or xi.shape != (grid.dim,):
        raise ValueError("Slope and direction must have one component per axis")
    limit = _stable_limit(grid, V.c_plus)
    n_sub = max(1, int(math.ceil(trajectory.dt / limit - 1e-9)))
    h = trajectory.dt / n_sub
    xi_edges = lattice_service.slope_on_edges(grid, xi)
    w = np.zeros(grid.shape)
    frames = [w.copy()]
    for n in range(trajectory.n_slices - 1):
        grad_phi = lattice_service.grad_field(grid, trajectory.values[n])
        a = V.d2V(grad_phi + lattice_service.slope_on_edges(grid, p))
        for _ in range(n_sub):
            w = w + h * lattice_service.divergence_field(grid, a * (lattice_service.grad_field(grid, w) + xi_edges))
        frames.append(w.copy())
    return SpaceTimeField(grid, trajectory.t0, trajectory.dt, np.stack(frames))


def discrete_elliptic_operator(dsigma: EffectiveGradient, u: np.ndarray, dom: DirichletDomain):
    """
    Однородный оператор ∇^ε·Dσ̄(∇^ε u) с продолжением нулём; значения вне D^ε равны нулю.
    Возвращает (значения, число вычислений вне таблицы Dσ̄).
    """
    G = lattice_service.grad_field(dom, u)
    S, clamped = dsigma.evaluate(G, axis=0)
    return lattice_service.divergence_field(dom, S), clamped


def solve_homogenized(dsigma: EffectiveGradient, dom: DirichletDomain, f, horizon: float = 1.0,
                      dt: Optional[float] = None, record_dt: Optional[float] = None):
    """
    Явная схема для ∂_t ū = ∇^ε·Dσ̄(∇^ε ū) на (-horizon, 0) с граничными данными f̃_ε.
    Возвращает (поле, error); error описывает выход Dσ̄ за пределы таблицы.
    """
    if f is None:
        raise ValueError("Boundary data is missing")
    limit = dom.eps ** 2 / (8.0 * dom.dim * dsigma.lipschitz)
    dt = limit if dt is None else float(dt)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"unstable time step {dt} > {limit}")
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    dt = horizon / n_steps
    stride = 1 if record_dt is None else max(1, int(round(record_dt / dt)))
    first = n_steps % stride
    s_minus = -float(horizon)
    pinned = dom.pinned
    u = lattice_service.smoothed_boundary(dom, f, s_minus, mask=np.ones(dom.shape, dtype=bool))
    frames = [u.copy()] if first == 0 else []
    clamped_total = 0
    for n in range(n_steps):
        rhs, clamped = discrete_elliptic_operator(dsigma, u, dom)
        clamped_total += clamped
        u = u + dt * rhs
        u[pinned] = lattice_service.smoothed_boundary(dom, f, s_minus + (n + 1) * dt)[pinned]
        if n + 1 >= first and (n + 1 - first) % stride == 0:
            frames.append(u.copy())
    field = SpaceTimeField(dom, s_minus + first * dt, stride * dt, np.stack(frames))
    if clamped_total:
        message = f"Effective gradient evaluated outside its table {clamped_total} times (values clamped)"
        violations_logger.warning(message)
        return field, message
    return field, None


def phi_cl(C: float, L: int, t, r, d: int):
    """
    Огибающая Нэша–Аронсона Φ_{C,L}(t, x) = C (t∨1)^{-d/2} exp(-|x|/(C√t)) exp(-t/(CL²)).
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    root = np.sqrt(np.maximum(t, 1e-300))
    return C * np.maximum(t, 1.0) ** (-d / 2.0) * np.exp(-r / (C * root)) * np.exp(-t / (C * L ** 2))


def torus_distance(grid: TorusGrid, y) -> np.ndarray:
    """
    Евклидово расстояние минимального образа от узла y до всех узлов тора.
    """
    idx = np.indices(grid.shape)
    sq = np.zeros(grid.shape)
    for i in range(grid.dim):
        delta = np.abs(idx[i] - grid.index_of(y)[i])
        delta = np.minimum(delta, grid.side - delta)
        sq = sq + delta ** 2
    return np.sqrt(sq)


def nash_aronson_fit(P: HeatKernelTable):
    """
    Наименьшее C из {1, 2, 4, ..., 64}, при котором P + 1/|Λ| ≤ Φ_{C,L} при t - s ≤ L²
    и |P| ≤ Φ_{C,L} при t - s ≥ L². Возвращает (C, error).
    """
    grid = P.grid
    L = grid.radius
    r = torus_distance(grid, P.y)
    elapsed = P.times - P.s
    active = elapsed > 0
    if not np.any(active):
        return None, "Heat kernel table has no slices after the source time"
    vals = P.values[active]
    el = elapsed[active]
    early = el <= L ** 2 + 1e-12
    shifted = vals + 1.0 / grid.n_sites
    negative = float(np.min(shifted[early])) if np.any(early) else 0.0
    if negative < -NASH_ARONSON_TOL:
        violations_logger.warning(f"Heat kernel lower bound violated: min(P + 1/|Lambda|) = {negative:.3e}")
    lhs = np.where(early[(...,) + (None,) * grid.dim], shifted, np.abs(vals))
    for C in NASH_ARONSON_GRID:
        envelope = phi_cl(C, L, el[(...,) + (None,) * grid.dim], r[None], grid.dim)
        if np.all(lhs <= envelope + NASH_ARONSON_TOL):
            return float(C), None
    message = f"No Nash-Aronson constant C <= {NASH_ARONSON_GRID[-1]} bounds the heat kernel (L={L})"
    violations_logger.warning(message)
    return None, message
