import logging
import math
from dataclasses import replace
from typing import List, Optional

import numpy as np

from models.dynamics import SlopePath
from models.homogenization import ErrorTermReport, TwoScaleExpansion
from models.lattice import DirichletDomain, SpaceTimeField, TorusGrid
from models.noise import NoiseSource
from models.parabolic import EffectiveGradient
from models.potential import Potential
from services import dynamics_service, lattice_service, norms_service

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")

PARTITION_TOL = 1e-12


def mesoscopic_scale(eps: float, dim: int) -> float:
    """
    κ = ε^{1/2}(1 + |ln ε|^{1/2}·𝟙_{d=2}).
    """
    if not 0 < eps < 1:
        raise ValueError(f"Mesh size must lie in (0, 1), got {eps}")
    log_term = math.sqrt(abs(math.log(eps))) if dim == 2 else 0.0
    return math.sqrt(eps) * (1.0 + log_term)


def _cubic_bspline(s: np.ndarray) -> np.ndarray:
    a = np.abs(s)
    inner = (4.0 - 6.0 * a ** 2 + 3.0 * a ** 3) / 6.0
    outer = (2.0 - a) ** 3 / 6.0
    return np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))


def mesoscopic_points(kappa: float, dim: int) -> np.ndarray:
    """
    Точки Y_κ = κZ^d ∩ D для D = (0, 1)^d, массив (n_y, d).
    """
    axis = kappa * np.arange(1, int(math.ceil(1.0 / kappa)) + 1)
    axis = axis[axis < 1.0 - 1e-12]
    if len(axis) == 0:
        raise ValueError(f"Mesoscopic scale {kappa} leaves no partition points inside the unit cube")
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def partition_of_unity(dom: DirichletDomain, kappa: float):
    """
    Разбиение единицы χ_y: тензорные кубические B-сплайны с шагом узлов κ
    (носитель y + [-2κ, 2κ]^d), нормированные поточечно суммой.
    Возвращает (точки (n_y, d), веса (n_y, *shape)).
    """
    if not dom.eps < kappa < 1:
        raise ValueError(f"Mesoscopic scale must lie in (eps, 1), got {kappa} with eps={dom.eps}")
    points = mesoscopic_points(kappa, dom.dim)
    X = dom.coords()
    raw = np.ones((len(points),) + dom.shape)
    for i in range(dom.dim):
        offsets = (X[i][None] - points[:, i].reshape((-1,) + (1,) * dom.dim)) / kappa
        raw *= _cubic_bspline(offsets)
    total = raw.sum(axis=0)
    if np.any(total <= 0):
        raise RuntimeError("Partition of unity has uncovered sites")
    chi = raw / total[None]
    deviation = float(np.max(np.abs(chi.sum(axis=0)[dom.interior] - 1.0)))
    if deviation > PARTITION_TOL:
        raise RuntimeError(f"Partition of unity does not sum to one (deviation {deviation:.3e})")
    return points, chi


def slope_blocks(horizon: float, kappa: float) -> np.ndarray:
    """
    Границы временных блоков длины 4κ², отсчитанных от верхнего момента 0 вниз до -horizon.
    Последний (нижний) блок может быть короче.
    """
    length = 4.0 * kappa ** 2
    inner = [-k * length for k in range(1, int(math.ceil(horizon / length)))]
    inner = [t for t in inner if t > -horizon + 1e-12]
    return np.array(sorted([-float(horizon)] + inner + [0.0]))


def _block_of(edges: np.ndarray, times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, times + 1e-12, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def local_slopes(ubar: SpaceTimeField, kappa: float, points: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """
    ξ_y на каждом временном блоке: среднее ∇^ε ū по блоку и рёбрам бокса |x - y|_∞ ≤ 2κ.
    В пограничном слое dist(y, ∂D) < κ наклон равен нулю. Результат (n_blocks, n_y, d).
    """
    dom = ubar.grid
    G = lattice_service.grad_field(dom, ubar.values)
    edge_mask = dom.edge_mask()
    X = dom.coords()
    blocks = _block_of(edges, ubar.times)
    n_blocks = len(edges) - 1
    xi = np.zeros((n_blocks, len(points), dom.dim))
    for j, y in enumerate(points):
        if np.min(np.minimum(y, 1.0 - y)) < kappa - 1e-12:
            continue
        near = np.all(np.abs(X - y.reshape((-1,) + (1,) * dom.dim)) <= 2.0 * kappa + 1e-12, axis=0)
        mask = edge_mask & near[None]
        counts = mask.sum(axis=tuple(range(1, dom.dim + 1)))
        for b in range(n_blocks):
            sel = blocks == b
            if not np.any(sel):
                continue
            sums = (G[sel] * mask[None]).sum(axis=(0,) + tuple(range(2, dom.dim + 2)))
            xi[b, j] = sums / (counts * sel.sum())
    return xi


def shared_window(src: NoiseSource, dom: DirichletDomain, kappa: float) -> NoiseSource:
    """
    Источник шума с окном, покрывающим D^ε и все торы y/ε + Λ_{2L}: динамика Дирихле
    и мезоскопические корректоры получают одни и те же приращения.
    """
    L = int(math.floor(kappa / dom.eps))
    centers = np.rint(mesoscopic_points(kappa, dom.dim) / dom.eps).astype(int)
    lo = np.minimum(0, centers.min(axis=0) - 2 * L)
    hi = np.maximum(dom.n, centers.max(axis=0) + 2 * L)
    return replace(src, window_origin=tuple(int(v) for v in lo),
                   window_shape=tuple(int(v) for v in hi - lo + 1))


def run_mesoscopic_correctors(ubar: SpaceTimeField, kappa: float, V: Potential, src: NoiseSource,
                              points: np.ndarray, edges: np.ndarray, xi: np.ndarray,
                              dt: Optional[float] = None) -> List[SpaceTimeField]:
    """
    Корректоры φ_{Q_y}(·, ·; ξ_y) на торах y/ε + Λ_{2L}, L = ⌊κ/ε⌋, время (-horizon/ε², 0).
    Шаг по времени — шаг динамики Дирихле, умноженный на 1/ε², так что номера шагов шума совпадают.
    """
    dom = ubar.grid
    eps = dom.eps
    L = int(math.floor(kappa / eps))
    if L < 1:
        raise ValueError(f"Mesoscopic radius floor(kappa/eps) must be >= 1, got kappa={kappa}, eps={eps}")
    horizon = -float(edges[0])
    macro_dt, _ = dynamics_service.dirichlet_time_step(dom, V, horizon, dt)
    micro_dt = macro_dt / eps ** 2
    record_dt = ubar.dt / eps ** 2
    open_edges = np.concatenate([[-np.inf], edges[1:-1], [np.inf]])
    correctors = []
    for j, y in enumerate(points):
        center = tuple(int(c) for c in np.rint(y / eps))
        grid = TorusGrid(dom.dim, 2 * L, center)
        path = SlopePath.from_arrays(open_edges, xi[:, j]).scaled_time(1.0 / eps ** 2)
        field = dynamics_service.integrate_torus(grid, -horizon / eps ** 2, 0.0, V, src, slope=path,
                                                 dt=micro_dt, record_dt=record_dt)
        correctors.append(field)
    logger.debug(f"Mesoscopic correctors finished: {len(points)} tori of radius {2 * L}")
    return correctors


def _map_to_domain(dom: DirichletDomain, corrector: SpaceTimeField, times: np.ndarray) -> np.ndarray:
    # значения периодического корректора в микроскопических узлах области на моментах ū
    grid = corrector.grid
    idx = np.indices(dom.shape)
    lookup = tuple((idx[i] - grid.center[i] + grid.radius) % grid.side for i in range(dom.dim))
    slices = [corrector.index_at(t / dom.eps ** 2) for t in times]
    return np.stack([corrector.values[n][lookup] for n in slices])


def build_two_scale(ubar: SpaceTimeField, kappa: float, V: Potential, src: Optional[NoiseSource] = None,
                    correctors: Optional[List[SpaceTimeField]] = None,
                    dt: Optional[float] = None) -> TwoScaleExpansion:
    """
    Двухмасштабное разложение w^ε = ū^ε + ε Σ_y χ_y φ_{Q_y}(t/ε², x/ε; ξ_y(t)).
    Если correctors не переданы, они считаются на общем окне шума src.
    Градиент раскладывается точно: ∇w = Σ χ⃗_y ∇v_y + (∇ū - Σ χ⃗_y ξ_y) + ε Σ φ_y ∇χ_y,
    где χ⃗_y — значение χ_y в конце ребра, а v_y = ξ_y·x + εφ_y.
    """
    dom = ubar.grid
    if not isinstance(dom, DirichletDomain):
        raise ValueError("Two-scale expansion needs a homogenized field on the Dirichlet domain")
    eps = dom.eps
    points, chi = partition_of_unity(dom, kappa)
    horizon = -float(ubar.t0)
    if horizon <= 0 or abs(ubar.t_end) > 1e-9:
        raise ValueError(f"Homogenized field must cover (-horizon, 0), got ({ubar.t0}, {ubar.t_end})")
    edges = slope_blocks(horizon, kappa)
    xi = local_slopes(ubar, kappa, points, edges)
    interior_points = np.array([np.min(np.minimum(y, 1.0 - y)) >= kappa - 1e-12 for y in points])

    if correctors is None:
        if src is None:
            raise ValueError("Either correctors or a noise source must be given")
        correctors = run_mesoscopic_correctors(ubar, kappa, V, src, points, edges, xi, dt=dt)
    if len(correctors) != len(points):
        raise ValueError(f"Expected {len(points)} correctors, got {len(correctors)}")

    times = ubar.times
    blocks = _block_of(edges, times)
    phi = np.stack([_map_to_domain(dom, c, times) for c in correctors])
    chi_fwd = np.stack([np.stack([lattice_service.shift(dom, c, i, 1) for i in range(dom.dim)]) for c in chi])
    grad_chi = lattice_service.grad_field(dom, chi)

    w_values = ubar.values + eps * np.einsum("y...,yt...->t...", chi, phi)
    gradient = lattice_service.grad_field(dom, w_values)
    grad_ubar = lattice_service.grad_field(dom, ubar.values)
    spatial = (1,) * dom.dim

    weighted = np.zeros_like(gradient)
    slope_part = np.zeros_like(gradient)
    corrector_part = np.zeros_like(gradient)
    for j in range(len(points)):
        slopes = xi[blocks, j].reshape((len(times), dom.dim) + spatial)
        # ε∇^ε φ(·/ε) равен микроскопическому градиенту φ
        grad_phi = lattice_service.grad_field(dom, phi[j]) * eps
        weighted += chi_fwd[j][None] * (slopes + grad_phi)
        slope_part += chi_fwd[j][None] * slopes
        corrector_part += eps * phi[j][:, None] * grad_chi[j][None]
    slope_remainder = grad_ubar - slope_part

    w = SpaceTimeField(dom, ubar.t0, ubar.dt, w_values)
    logger.info(f"Two-scale expansion built: eps={eps:.4g}, kappa={kappa:.4g}, points={len(points)}")
    return TwoScaleExpansion(
        ubar=ubar, kappa=float(kappa), mesoscopic_radius=int(math.floor(kappa / eps)), points=points,
        chi=chi, block_edges=edges, xi=xi, interior_points=interior_points, correctors=list(correctors),
        w=w, gradient=gradient, weighted_gradient=weighted, slope_remainder=slope_remainder,
        corrector_remainder=corrector_part, corrector_values=phi,
    )


def _cell_blocks(expansion: TwoScaleExpansion) -> int:
    horizon = -float(expansion.ubar.t0)
    n = int(math.floor(horizon / expansion.kappa ** 2 + 1e-9))
    if n < 1:
        raise ValueError("Horizon is shorter than one mesoscopic time block")
    return n


def _cell_slices(expansion: TwoScaleExpansion, b: int) -> np.ndarray:
    k2 = expansion.kappa ** 2
    t = expansion.ubar.times
    sel = (t > -(b + 1) * k2 - 1e-12) & (t <= -b * k2 + 1e-12)
    if not np.any(sel):
        sel = np.zeros_like(sel)
        sel[expansion.ubar.index_at(-(b + 0.5) * k2)] = True
    return sel


def _slope_for_cell(expansion: TwoScaleExpansion, b: int, j: int) -> np.ndarray:
    t_mid = -(b + 0.5) * expansion.kappa ** 2
    k = int(_block_of(expansion.block_edges, np.array([t_mid]))[0])
    return expansion.xi[k, j]


def _box_mask(dom: DirichletDomain, y: np.ndarray, radius: float) -> np.ndarray:
    X = dom.coords()
    return np.all(np.abs(X - y.reshape((-1,) + (1,) * dom.dim)) <= radius + 1e-12, axis=0)


def _neighbors(points: np.ndarray, j: int, kappa: float) -> np.ndarray:
    return np.flatnonzero(np.max(np.abs(points - points[j]), axis=1) <= kappa + 1e-9)


def error_terms(expansion: TwoScaleExpansion, cell) -> ErrorTermReport:
    """
    Три слагаемых E_z для ячейки z = (b, j): блок времени (-(b+1)κ², -bκ²] и точка y_j.
    gradient_term: Σ_{z'∼z} ‖∇ū - ξ_{z'}‖ на z + Q_κ,
    slope_term: Σ_{z'∼z} |ξ_z - ξ_{z'}|,
    corrector_term: (ε/κ) Σ_{y'∼y} ‖φ_{y'}‖ на z/ε + Q_L.
    """
    b, j = int(cell[0]), int(cell[1])
    n_blocks = _cell_blocks(expansion)
    if not 0 <= b < n_blocks or not 0 <= j < len(expansion.points):
        raise ValueError(f"Cell {tuple(cell)} lies outside the mesoscopic partition")
    dom = expansion.ubar.grid
    kappa = expansion.kappa
    y = expansion.points[j]
    sel = _cell_slices(expansion, b)
    box = _box_mask(dom, y, kappa)
    edges = dom.edge_mask() & box[None]
    n_edges_sites = max(int(box.sum()), 1)
    G = lattice_service.grad_field(dom, expansion.ubar.values[sel])

    neighbor_points = _neighbors(expansion.points, j, kappa)
    neighbor_blocks = [bb for bb in (b - 1, b, b + 1) if 0 <= bb < n_blocks]
    xi_z = _slope_for_cell(expansion, b, j)
    spatial = (1,) * dom.dim

    gradient_term = 0.0
    slope_term = 0.0
    for bb in neighbor_blocks:
        for jj in neighbor_points:
            xi_n = _slope_for_cell(expansion, bb, jj)
            diff = (G - xi_n.reshape((1, dom.dim) + spatial)) * edges[None]
            gradient_term += float(np.sqrt(np.sum(diff ** 2) / (sel.sum() * n_edges_sites)))
            slope_term += float(np.linalg.norm(xi_z - xi_n))

    L = expansion.mesoscopic_radius
    micro_box = _box_mask(dom, y, L * dom.eps)
    corrector_term = 0.0
    for jj in neighbor_points:
        block = expansion.corrector_values[jj][sel][:, micro_box]
        corrector_term += float(np.sqrt(np.mean(block ** 2)))
    corrector_term *= dom.eps / kappa
    return ErrorTermReport((b, j), gradient_term, slope_term, corrector_term)


def aggregate(expansion: TwoScaleExpansion):
    """
    (1/|Z_κ|) Σ_z E_z² по всем ячейкам; возвращает (значение, список отчётов).
    """
    reports = [error_terms(expansion, (b, j))
               for b in range(_cell_blocks(expansion)) for j in range(len(expansion.points))]
    value = float(np.mean([r.value ** 2 for r in reports]))
    return value, reports


def flux_error_field(expansion: TwoScaleExpansion, V: Potential, dsigma: EffectiveGradient) -> np.ndarray:
    """
    Поле Σ_y ∇^εχ_y · (V'(∇^ε v_y) - Dσ̄(ξ_y)) на узлах, форма (T, *shape).
    """
    dom = expansion.ubar.grid
    eps = dom.eps
    times = expansion.ubar.times
    blocks = _block_of(expansion.block_edges, times)
    grad_chi = lattice_service.grad_field(dom, expansion.chi)
    spatial = (1,) * dom.dim
    out = np.zeros((len(times),) + dom.shape)
    clamped_total = 0
    for j in range(len(expansion.points)):
        slopes = expansion.xi[blocks, j]
        effective, clamped = dsigma.evaluate(slopes, axis=-1)
        clamped_total += clamped
        grad_v = slopes.reshape((len(times), dom.dim) + spatial) \
            + lattice_service.grad_field(dom, expansion.corrector_values[j]) * eps
        flux = V.dV(grad_v) - effective.reshape((len(times), dom.dim) + spatial)
        out += np.sum(grad_chi[j][None] * flux, axis=1)
    if clamped_total:
        violations_logger.warning(f"Effective gradient clamped {clamped_total} times in the flux error field")
    return out * dom.interior


def flux_weak_norm(expansion: TwoScaleExpansion, V: Potential, dsigma: EffectiveGradient,
                   m: Optional[int] = None) -> float:
    """
    Многомасштабная оценка ‖Σ∇χ_y·(V'(∇v_y) - Dσ̄(ξ_y))‖_{Ĥ^{-1}_par(Q^ε)} по внутренним узлам.
    """
    dom = expansion.ubar.grid
    field = flux_error_field(expansion, V, dsigma)
    inner = (slice(None),) + (slice(1, dom.n),) * dom.dim
    side = dom.n - 1
    if m is None:
        m = max(0, int(math.floor(math.log(side) / math.log(3.0) + 1e-9)))
    return norms_service.hminus1_par_multiscale_box(field[inner], expansion.ubar.dt, m, spacing=dom.eps)
