import logging
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid
from scipy.sparse.linalg import LinearOperator, cg, splu

from models.lattice import EdgeFieldSeries, ParabolicCylinder
from models.norms import NormReport
from services.lattice_service import restrict

logger = logging.getLogger(__name__)
violations_logger = logging.getLogger("violations")

EXACT_DOF_LIMIT = 10_000
EXACT_RTOL = 1e-8
EXACT_MAXITER = 5_000


def lp_norm(f, Q: Optional[ParabolicCylinder] = None, p: float = 2.0, normalized: bool = False) -> float:
    """
    ‖f‖_{L^p(Q)}: интеграл по времени (трапеции) и сумма по узлам (и рёбрам для рёберного ряда).
    normalized делит на |Q| до извлечения корня.
    """
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    block, w, count, _ = restrict(f, Q)
    if np.isinf(p):
        return float(np.max(np.abs(block))) if block.size else 0.0
    site_axes = tuple(range(1, block.ndim))
    total = float(np.sum(w * np.sum(np.abs(block) ** p, axis=site_axes)))
    if normalized:
        total /= float(w.sum()) * count
    return total ** (1.0 / p)


def _spatial_coords(grid, block_shape):
    d = grid.dim
    spacing = 1.0 / grid.scale
    axes = [np.arange(n) * spacing for n in block_shape[-d:]]
    return np.stack(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T


def holder_seminorm(f, Q: Optional[ParabolicCylinder] = None, alpha: float = 1.0, chunk: int = 512) -> float:
    """
    [f]_{C^{0,α}(Q)} = sup |f(t,x) - f(s,y)| / (|t-s|^{α/2} + |x-y|^α) с параболическим масштабом.
    Бокс цилиндра поднимается с тора в Z^d, расстояние евклидово.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"Hölder exponent must lie in (0, 1], got {alpha}")
    if isinstance(f, EdgeFieldSeries):
        raise ValueError("Hölder seminorm is defined for site fields")
    block, _, _, mask = restrict(f, Q)
    times = f.dt * np.arange(block.shape[0])
    xs = _spatial_coords(f.grid, block.shape)
    n_sites = xs.shape[0]
    values = block.reshape(block.shape[0], -1)
    keep = np.ones(n_sites, dtype=bool) if mask is None else mask.ravel()
    pts_t = np.repeat(times, n_sites)[np.tile(keep, len(times))]
    pts_x = np.tile(xs, (len(times), 1))[np.tile(keep, len(times))]
    pts_v = values[:, keep].ravel()
    best = 0.0
    # попарный перебор кусками
    for start in range(0, len(pts_v), chunk):
        sl = slice(start, start + chunk)
        dt = np.abs(pts_t[sl, None] - pts_t[None, :])
        dx = np.linalg.norm(pts_x[sl, None, :] - pts_x[None, :, :], axis=-1)
        denom = dt ** (alpha / 2.0) + dx ** alpha
        diff = np.abs(pts_v[sl, None] - pts_v[None, :])
        ratio = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
        best = max(best, float(ratio.max()))
    return best


def _block_sums(arr: np.ndarray, n_blocks: int, axes) -> np.ndarray:
    for ax in axes:
        starts = np.array([c[0] for c in np.array_split(np.arange(arr.shape[ax]), n_blocks)])
        arr = np.add.reduceat(arr, starts, axis=ax)
    return arr


def hminus1_par_multiscale_box(values: np.ndarray, dt: float, m: int, spacing: float = 1.0) -> float:
    """
    Многомасштабная оценка ‖f‖_{Ĥ^{-1}_par} по массиву (T, *shape) на равномерной сетке времени:
    ‖f‖_{L̲²} + Σ_{k=0}^{m} r_k·(среднее квадратов средних по ячейкам масштаба k)^{1/2},
    где на масштабе k бокс делится на 3^{m-k} частей по каждой оси, интервал — на 9^{m-k},
    а r_k — сторона ячейки (spacing · число узлов стороны · 3^{k-m}).
    """
    if m < 0:
        raise ValueError(f"Scale exponent must be nonnegative, got {m}")
    n_slices = values.shape[0]
    if n_slices < 2:
        raise ValueError("Multiscale estimate needs at least two time slices")
    duration = dt * (n_slices - 1)
    spatial = values.shape[1:]
    site_axes = tuple(range(1, values.ndim))
    n_sites = int(np.prod(spatial))
    w = np.full(n_slices, dt)
    w[0] = w[-1] = 0.5 * dt
    total = float(np.sqrt(np.sum(w * np.sum(values ** 2, axis=site_axes)) / (duration * n_sites)))

    cum = cumulative_trapezoid(values, dx=dt, axis=0, initial=0.0)
    ones = np.ones(spatial)
    side = spatial[0] * spacing
    for k in range(m + 1):
        n_time = 9 ** (m - k)
        n_space = 3 ** (m - k)
        if n_space > min(spatial):
            raise ValueError(f"Box with sides {spatial} is too small for scale exponent {m}")
        edges = np.linspace(0.0, duration, n_time + 1) / dt
        lo = np.clip(np.floor(edges).astype(int), 0, n_slices - 2)
        frac = (edges - lo)[(...,) + (None,) * len(spatial)]
        at_edges = cum[lo] * (1.0 - frac) + cum[lo + 1] * frac
        integrals = np.diff(at_edges, axis=0)
        sums = _block_sums(integrals, n_space, site_axes)
        counts = _block_sums(ones, n_space, tuple(range(len(spatial))))
        averages = sums / (counts[None] * (duration / n_time))
        r_k = side * 3.0 ** (k - m)
        total += r_k * float(np.sqrt(np.mean(averages ** 2)))
    return total


def hminus1_par_multiscale(f, m: int) -> float:
    """
    Многомасштабная оценка на триадном цилиндре Q_{3^m}: решётка со стороной 3^m
    и последние 9^m единиц времени поля.
    """
    if m < 0:
        raise ValueError(f"Scale exponent must be nonnegative, got {m}")
    grid = f.grid
    if not grid.periodic or grid.side != 3 ** m:
        raise ValueError(f"Multiscale estimate on Q_(3^{m}) needs a torus of side {3 ** m}")
    Q = ParabolicCylinder(f.t_end - 9.0 ** m, f.t_end, grid)
    block, _, _, _ = restrict(f, Q)
    return hminus1_par_multiscale_box(block, f.dt, m)


def _dirichlet_operator(side: int, dim: int, mass: float):
    lap1 = sparse.diags([-np.ones(side - 1), 2.0 * np.ones(side), -np.ones(side - 1)], [-1, 0, 1])
    eye1 = sparse.identity(side)
    lap = sparse.csc_matrix((side ** dim, side ** dim))
    for i in range(dim):
        term = None
        for j in range(dim):
            factor = lap1 if i == j else eye1
            term = factor if term is None else sparse.kron(term, factor)
        lap = lap + term
    return (lap + mass * sparse.identity(side ** dim)).tocsc()


def hminus1_par_exact(f, Q: Optional[ParabolicCylinder] = None):
    """
    Двойственная норма ‖f‖_{Ĥ^{-1}_par(Q)} = sup (1/|Q|)∫Σ f v по ‖v‖_{Ĥ¹_par} ≤ 1,
    v = 0 в начальный момент и вне бокса. Квадрат нормы v — гильбертов:
    (1/|Q|)Σ Δt [vᵀAv + (D v)ᵀA⁻¹(D v)], A = I/side² - Δ_Dir, D — разность назад по времени.
    Возвращает (NormReport, error); error не None, если CG не сошёлся.
    """
    block, _, _, _ = restrict(f, Q)
    dim = f.grid.dim
    rhs = block[1:]
    n_time = rhs.shape[0]
    if n_time < 1:
        return None, "Dual norm needs at least two time slices"
    side = rhs.shape[1]
    n_space = side ** dim
    if n_time * n_space > EXACT_DOF_LIMIT:
        raise ValueError(f"Cylinder too large for the exact dual norm: {n_time * n_space} > {EXACT_DOF_LIMIT}")
    dt = f.dt
    A = _dirichlet_operator(side, dim, 1.0 / side ** 2)
    lu = splu(A)

    def apply(vec):
        v = vec.reshape(n_time, n_space)
        dv = np.diff(np.vstack([np.zeros((1, n_space)), v]), axis=0) / dt
        z = lu.solve(dv.T).T
        # Dᵀz: сопряжённая разность вперёд
        back = (z - np.vstack([z[1:], np.zeros((1, n_space))])) / dt
        return (A @ v.T).T.ravel() + back.ravel()

    M = LinearOperator((n_time * n_space, n_time * n_space), matvec=apply, dtype=float)
    b = rhs.reshape(n_time, n_space).ravel().astype(float)
    if not np.any(b):
        return NormReport("hminus1_par_exact", 0.0, True, Q), None
    iterations = [0]

    def _count(_):
        iterations[0] += 1

    y, info = cg(M, b, rtol=EXACT_RTOL, maxiter=EXACT_MAXITER, callback=_count)
    value = float(np.sqrt(max(float(b @ y), 0.0) / (n_time * n_space)))
    flagged = info != 0
    report = NormReport("hminus1_par_exact", value, True, Q, flagged=flagged, iterations=iterations[0])
    if flagged:
        message = f"Dual norm solve did not converge after {iterations[0]} iterations (info={info})"
        violations_logger.warning(message)
        return report, message
    return report, None
