import logging
from typing import Optional

import numpy as np

from models.lattice import (
    DirichletDomain,
    EdgeFieldSeries,
    ParabolicCylinder,
    SpaceTimeField,
    TorusGrid,
)

logger = logging.getLogger(__name__)


def make_torus(d: int, L: int, center=None) -> TorusGrid:
    """
    Создаёт тор Λ_L размерности d. Отклоняет d < 2 и L < 1.
    """
    if d < 2:
        raise ValueError(f"Dimension must be >= 2, got {d}")
    if L < 1:
        raise ValueError(f"Radius must be >= 1, got {L}")
    return TorusGrid(int(d), int(L), None if center is None else tuple(int(c) for c in center))


def make_dirichlet(d: int, n: int) -> DirichletDomain:
    """
    Создаёт дискретизацию единичного куба с шагом ε = 1/n.
    """
    return DirichletDomain(int(d), int(n))


def shift(grid, u: np.ndarray, axis: int, step: int) -> np.ndarray:
    """
    Значение в x + step·e_axis по последним d осям массива.
    На торе — периодический сдвиг, в области Дирихле — продолжение нулём.
    """
    ax = u.ndim - grid.dim + axis
    if grid.periodic:
        return np.roll(u, -step, axis=ax)
    out = np.zeros_like(u)
    n = u.shape[ax]
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if step > 0:
        dst[ax], src[ax] = slice(0, n - step), slice(step, n)
    else:
        dst[ax], src[ax] = slice(-step, n), slice(0, n + step)
    out[tuple(dst)] = u[tuple(src)]
    return out


def grad_field(grid, u: np.ndarray) -> np.ndarray:
    """
    Градиент по всем положительно ориентированным рёбрам:
    результат формы (..., d, *shape), компонента i равна u(x+e_i) - u(x)
    (в области Дирихле домножена на 1/ε).
    """
    comps = [(shift(grid, u, i, 1) - u) * grid.scale for i in range(grid.dim)]
    return np.stack(comps, axis=u.ndim - grid.dim)


def divergence_field(grid, g: np.ndarray) -> np.ndarray:
    """
    Дивергенция ∇·g(x) = Σ_{y∼x} g(x, y) для рёберного поля формы (..., d, *shape).
    В области Дирихле значения вне D^ε обнуляются.
    """
    comp_axis = g.ndim - grid.dim - 1
    out = None
    for i in range(grid.dim):
        gi = np.take(g, i, axis=comp_axis)
        term = gi - shift(grid, gi, i, -1)
        out = term if out is None else out + term
    out = out * grid.scale
    if not grid.periodic:
        out = out * grid.interior
    return out


def _check_site(grid, x):
    if not grid.contains(x):
        raise ValueError(f"Site {tuple(x)} lies outside the domain and is not a boundary site")


def grad(grid, u: np.ndarray, e) -> float:
    """
    Градиент u(y) - u(x) на ребре e = (x, y); для области Дирихле с множителем 1/ε.
    """
    x, y = e
    _check_site(grid, x)
    _check_site(grid, y)
    diff = np.array(y, dtype=int) - np.array(x, dtype=int)
    if grid.periodic:
        diff = (diff + 1) % grid.side - 1
    if np.abs(diff).sum() != 1:
        raise ValueError(f"Sites {tuple(x)} and {tuple(y)} are not neighbors")
    return float((u[grid.index_of(y)] - u[grid.index_of(x)]) * grid.scale)


def divergence(grid, g: np.ndarray, x) -> float:
    """
    Значение Σ_{y∼x} g(x, y) в узле x.
    """
    _check_site(grid, x)
    return float(divergence_field(grid, g)[grid.index_of(x)])


def slope_on_edges(grid, q) -> np.ndarray:
    """
    Приводит наклон (d,) или (T, d) к форме, согласованной с рёберным полем.
    """
    q = np.asarray(q, dtype=float)
    return q.reshape(q.shape + (1,) * grid.dim)


def nonlinear_div_field(grid, V, q, u: np.ndarray) -> np.ndarray:
    """
    Нелинейный оператор ∇·V'(q + ∇u) во всех узлах.
    """
    g = grad_field(grid, u)
    if q is not None and grid.periodic:
        g = g + slope_on_edges(grid, q)
    return divergence_field(grid, V.dV(g))


def nonlinear_div(grid, V, q, u: np.ndarray, x) -> float:
    """
    Σ_{y∼x} V'(q·(y-x) + u(y) - u(x)) в узле x.
    """
    _check_site(grid, x)
    return float(nonlinear_div_field(grid, V, q, u)[grid.index_of(x)])


def laplacian_eigenvalues(grid: TorusGrid) -> np.ndarray:
    """
    Собственные числа λ_k = Σ_i (2 - 2cos(2πk_i/(2L+1))) в порядке np.fft.
    """
    n = grid.side
    base = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.fft.fftfreq(n))
    lam = np.zeros(grid.shape)
    for i in range(grid.dim):
        shape = [1] * grid.dim
        shape[i] = n
        lam = lam + base.reshape(shape)
    return lam


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    if n == 1:
        return np.array([dt])
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _box_indices(grid, center, radius):
    if radius is None:
        return None
    c = (0,) * grid.dim if center is None else tuple(int(v) for v in center)
    idx = []
    for i in range(grid.dim):
        offsets = np.arange(c[i] - radius, c[i] + radius + 1)
        if grid.periodic:
            idx.append((offsets + grid.radius) % grid.side)
        else:
            if offsets[0] < 0 or offsets[-1] > grid.n:
                raise ValueError("Cylinder box exceeds the Dirichlet domain")
            idx.append(offsets)
    return np.ix_(*idx)


def restrict(f, Q: Optional[ParabolicCylinder] = None):
    """
    Ограничение поля на цилиндр Q.
    Возвращает (блок значений, веса трапеций по времени, число узлов, маска или None).
    Время привязывается к ближайшим срезам.
    """
    times = f.times
    if Q is None:
        i0, i1 = 0, f.n_slices - 1
        center, radius = None, None
    else:
        tol = 1e-9 * max(1.0, f.dt)
        if Q.s_minus < times[0] - tol - 0.5 * f.dt or Q.s_plus > times[-1] + tol + 0.5 * f.dt:
            raise ValueError(
                f"Cylinder ({Q.s_minus}, {Q.s_plus}) exceeds the available time range "
                f"({times[0]}, {times[-1]})"
            )
        i0, i1 = f.index_at(Q.s_minus), f.index_at(Q.s_plus)
        center, radius = Q.center, Q.radius
    block = f.values[i0:i1 + 1]
    weights = trapezoid_weights(block.shape[0], f.dt)
    grid = f.grid
    is_edge = isinstance(f, EdgeFieldSeries)
    mask = None
    if radius is not None:
        box = _box_indices(grid, center, radius)
        lead = (slice(None),) * (2 if is_edge else 1)
        block = block[lead + box]
        count = (2 * radius + 1) ** grid.dim
    elif grid.periodic:
        count = grid.n_sites
    else:
        mask = grid.edge_mask() if is_edge else grid.interior
        block = block * mask
        count = grid.n_interior
    return block, weights, count, mask


def cylinder_average(f, Q: Optional[ParabolicCylinder] = None):
    """
    Среднее (f)_Q. Для рёберного ряда возвращает вектор: компонента i усредняет g(t, (x, x+e_i)).
    """
    block, w, count, _ = restrict(f, Q)
    total = float(w.sum()) * count
    if isinstance(f, EdgeFieldSeries):
        site_axes = tuple(range(2, block.ndim))
        per_slice = block.sum(axis=site_axes)
        return (w[:, None] * per_slice).sum(axis=0) / total
    site_axes = tuple(range(1, block.ndim))
    return float((w * block.sum(axis=site_axes)).sum() / total)


def partition_cells(m: int, n: int, d: int = 2):
    """
    Начала ячеек Z_{m,n}: цилиндры z + Q_{3^m} (время (z_t - 9^m, z_t], бокс стороны 3^m
    с центром z_x) разбивают триадный цилиндр (-9^n, 0] × {-(3^n-1)/2..(3^n-1)/2}^d.
    """
    if m < 0 or n < 0:
        raise ValueError("Scale exponents must be nonnegative")
    if m > n:
        raise ValueError(f"Cell scale m={m} exceeds cylinder scale n={n}")
    t_count = 9 ** (n - m)
    half = (3 ** (n - m) - 1) // 2
    times = [-k * 9 ** m for k in range(t_count)]
    axis = [j * 3 ** m for j in range(-half, half + 1)]
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    return [(t,) + tuple(int(c) for c in x) for t in times for x in centers]


def triadic_cylinder(m: int, d: int = 2):
    """
    Триадный цилиндр масштаба 3^m: тор радиуса (3^m - 1)/2 и интервал (-9^m, 0).
    """
    grid = TorusGrid(d, (3 ** m - 1) // 2)
    return grid, ParabolicCylinder(-9.0 ** m, 0.0, grid)


def cell_cylinder(grid, z, k: int) -> ParabolicCylinder:
    """
    Цилиндр z + Q_{3^k} для начала ячейки z = (t, x).
    """
    return ParabolicCylinder(float(z[0]) - 9.0 ** k, float(z[0]), grid, tuple(z[1:]), (3 ** k - 1) // 2)


def zero_field(grid, t0: float, t1: float, dt: float) -> SpaceTimeField:
    n = int(np.ceil((t1 - t0) / dt - 1e-9)) + 1
    return SpaceTimeField(grid, t0, dt, np.zeros((n,) + grid.shape))


_SMOOTHING_NODES, _SMOOTHING_WEIGHTS = np.polynomial.legendre.leggauss(4)


def smoothed_boundary(dom: DirichletDomain, f, t: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Сглаженные граничные данные f̃_ε(t, x) — нормированное среднее f(t, x + y) по y ∈ [-ε, ε]^d.
    Квадратура Гаусса–Лежандра, 4 узла по каждой оси. f(t, X) принимает массив координат формы (d, ...).
    Значения считаются только в узлах mask (по умолчанию — закреплённые узлы), остальные равны нулю.
    """
    if f is None:
        raise ValueError("Boundary data is missing")
    mask = dom.pinned if mask is None else mask
    X = dom.coords()[:, mask]
    out = np.zeros(dom.shape)
    acc = np.zeros(X.shape[1])
    grids = np.meshgrid(*([np.arange(len(_SMOOTHING_NODES))] * dom.dim), indexing="ij")
    for combo in zip(*(g.ravel() for g in grids)):
        offset = np.array([_SMOOTHING_NODES[k] for k in combo]) * dom.eps
        weight = np.prod([_SMOOTHING_WEIGHTS[k] for k in combo])
        acc += weight * np.asarray(f(t, X + offset[:, None]), dtype=float)
    # веса Гаусса–Лежандра на [-1, 1] суммируются в 2 по каждой оси
    out[mask] = acc / 2.0 ** dom.dim
    return out
