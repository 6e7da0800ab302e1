import logging
from dataclasses import replace

import numpy as np
from scipy.special import ndtri

from models.noise import NoiseSource

logger = logging.getLogger(__name__)

_U64 = np.uint64


def _counter(src: NoiseSource, step: int):
    # отрицательные шаги берутся из второй «половины» двусторонней броуновской траектории
    side, k = (0, step) if step >= 0 else (1, -step - 1)
    return np.array([0, k, side, src.channel], dtype=_U64)


def standard_normals(src: NoiseSource, step: int, count: int) -> np.ndarray:
    """
    Первые count стандартных нормальных величин потока (seed, replica, step, channel).
    Равномерные числа берутся из старших 53 бит Philox4x64, затем обратная функция Φ.
    """
    if count < 0:
        raise ValueError("Draw count must be nonnegative")
    key = np.array([int(src.seed), int(src.replica)], dtype=_U64)
    bitgen = np.random.Philox(key=key, counter=_counter(src, int(step)))
    raw = bitgen.random_raw(count)
    u = ((raw >> _U64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def _window_positions(src: NoiseSource, grid) -> np.ndarray:
    # глобальные координаты узлов решётки → плоские индексы в окне шума
    coords = np.indices(grid.shape) + np.array(grid.origin).reshape((-1,) + (1,) * grid.dim)
    rel = coords - np.array(src.window_origin).reshape((-1,) + (1,) * grid.dim)
    shape = np.array(src.window_shape).reshape((-1,) + (1,) * grid.dim)
    if np.any(rel < 0) or np.any(rel >= shape):
        raise ValueError(f"Grid with origin {grid.origin} leaves the noise window {src.window_origin}+{src.window_shape}")
    return np.ravel_multi_index(tuple(rel), tuple(src.window_shape))


def step_noise(src: NoiseSource, grid, step: int) -> np.ndarray:
    """
    Стандартные нормальные приращения для всех узлов решётки на шаге step, форма grid.shape.
    """
    if src.window_origin is None:
        return standard_normals(src, step, grid.n_sites).reshape(grid.shape)
    positions = _window_positions(src, grid)
    draws = standard_normals(src, step, int(np.prod(src.window_shape)))
    return draws[positions]


def increment(src: NoiseSource, x, k: int, grid=None) -> float:
    """
    Одно приращение X_k(x); приращение броуновского движения на [kΔt, (k+1)Δt] равно √Δt·increment.
    x: глобальная координата узла, если у источника есть окно, иначе координата в решётке grid.
    """
    if src.window_origin is not None:
        rel = tuple(int(c) - int(o) for c, o in zip(x, src.window_origin))
        if any(r < 0 or r >= s for r, s in zip(rel, src.window_shape)):
            raise ValueError(f"Site {tuple(x)} lies outside the noise window")
        flat = int(np.ravel_multi_index(rel, tuple(src.window_shape)))
    elif grid is not None:
        flat = grid.flat_index(x)
    else:
        raise ValueError("Site addressing needs a noise window or a grid")
    return float(standard_normals(src, k, flat + 1)[-1])


def mean_subtracted(src: NoiseSource, grid, k: int) -> np.ndarray:
    """
    Приращения за вычетом их пространственного среднего: Σ_x = 0.
    """
    if grid.n_sites < 2:
        raise ValueError("Mean-subtracted noise needs at least two sites")
    xi = step_noise(src, grid, k)
    return xi - xi.mean()


def brownian_increments(src: NoiseSource, n_steps: int, path: int = 0) -> np.ndarray:
    """
    n_steps независимых приращений скалярной траектории (шаг счётчика = номер траектории).
    """
    return standard_normals(src, path, n_steps) * np.sqrt(src.dt)


def independent(src: NoiseSource, channel_offset: int = 1) -> NoiseSource:
    """
    Источник с тем же ключом, но в независимом канале (например, для начального образца GFF).
    """
    return replace(src, channel=src.channel + channel_offset)


def for_replica(src: NoiseSource, replica: int) -> NoiseSource:
    return replace(src, replica=replica)
