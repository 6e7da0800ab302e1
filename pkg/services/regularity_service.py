import logging
from typing import Optional, Sequence

import numpy as np

from models.homogenization import ExcessProfile
from models.lattice import EdgeFieldSeries, ParabolicCylinder, SpaceTimeField
from services import lattice_service, norms_service

logger = logging.getLogger(__name__)


def _check_scales(ells: Sequence[int], L: int):
    if len(ells) == 0:
        raise ValueError("Excess decay needs at least one scale")
    for l in ells:
        if l < 4 or l > L:
            raise ValueError(f"Scale {l} must lie in [4, {L}]")
        if l & (l - 1):
            raise ValueError(f"Scale {l} is not dyadic")


def _affine_residual(block: np.ndarray, weights: np.ndarray, l: int, dim: int) -> float:
    # взвешенные наименьшие квадраты по регрессорам (1, x_1, ..., x_d)
    axis = np.arange(-l, l + 1, dtype=float)
    coords = np.stack(np.meshgrid(*([axis] * dim), indexing="ij")).reshape(dim, -1).T
    n_sites = coords.shape[0]
    design = np.hstack([np.ones((n_sites, 1)), coords])
    A = np.tile(design, (block.shape[0], 1))
    y = block.reshape(-1)
    sw = np.sqrt(np.repeat(weights, n_sites))
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    return float(np.sum(np.repeat(weights, n_sites) * resid ** 2) / (weights.sum() * n_sites))


def excess_decay(u: SpaceTimeField, ells: Sequence[int], p=None, top: Optional[float] = None) -> ExcessProfile:
    """
    Профиль избытка по масштабам l на цилиндрах Q_l = (top - l², top) × Λ_l:
    E₁(l) = (1/l) inf_ℓ ‖u - ℓ‖_{L̲²(Q_l)} по аффинным ℓ(x) = c + b·x,
    осцилляция (1/l)‖u - (u)_{Q_l}‖_{L̲²(Q_l)} и ‖∇u‖_{L̲²(Q_l)}.
    p: наклон, добавляемый к градиенту (u = φ на торе, полное поле p·x + φ).
    """
    grid = u.grid
    if not grid.periodic:
        raise ValueError("Excess decay is measured on a torus")
    _check_scales(ells, grid.radius)
    top = u.t_end if top is None else float(top)
    G = lattice_service.grad_field(grid, u.values)
    if p is not None:
        G = G + lattice_service.slope_on_edges(grid, p)
    grad = EdgeFieldSeries(grid, u.t0, u.dt, G)

    excess, oscillation, gradient = [], [], []
    for l in ells:
        Q = ParabolicCylinder(top - float(l) ** 2, top, grid, None, int(l))
        block, weights, count, _ = lattice_service.restrict(u, Q)
        if block.shape[0] < 2:
            raise ValueError(f"Cylinder of scale {l} holds fewer than two time slices")
        excess.append(np.sqrt(_affine_residual(block, weights, int(l), grid.dim)) / l)
        mean = lattice_service.cylinder_average(u, Q)
        centered = SpaceTimeField(grid, u.t0, u.dt, u.values - mean)
        oscillation.append(norms_service.lp_norm(centered, Q, normalized=True) / l)
        gradient.append(norms_service.lp_norm(grad, Q, normalized=True))
    logger.debug(f"Excess profile over scales {list(ells)}: {excess}")
    return ExcessProfile(tuple(int(l) for l in ells), np.array(excess), np.array(oscillation), np.array(gradient))
