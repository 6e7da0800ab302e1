from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """
    Периодический бокс Λ_L = {-L..L}^d со стороной 2L+1.
    Узлы нумеруются построчно (row-major), индекс i вдоль оси соответствует координате i - L.
    center: глобальная координата центрального узла (нужна, когда несколько решёток
    адресуют одну и ту же решётку шума).
    """
    dim: int
    radius: int
    center: Optional[Tuple[int, ...]] = None

    periodic = True

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"Torus dimension must be >= 2, got {self.dim}")
        if self.radius < 0:
            raise ValueError(f"Torus radius must be >= 0, got {self.radius}")
        if self.center is None:
            object.__setattr__(self, "center", (0,) * self.dim)
        elif len(self.center) != self.dim:
            raise ValueError("Torus center must have one coordinate per axis")

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def n_sites(self) -> int:
        return self.side ** self.dim

    @property
    def scale(self) -> float:
        return 1.0

    @property
    def origin(self) -> Tuple[int, ...]:
        # глобальная координата узла с индексом (0, ..., 0)
        return tuple(c - self.radius for c in self.center)

    def coords(self) -> np.ndarray:
        """
        Локальные координаты узлов, массив формы (d, *shape) со значениями в -L..L.
        """
        axis = np.arange(-self.radius, self.radius + 1)
        return np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"))

    def index_of(self, x) -> Tuple[int, ...]:
        """
        Индекс массива для локальной координаты x (с периодическим переносом).
        """
        if len(x) != self.dim:
            raise ValueError(f"Site {tuple(x)} does not have {self.dim} coordinates")
        return tuple((int(c) + self.radius) % self.side for c in x)

    def contains(self, x) -> bool:
        return len(x) == self.dim and all(-self.radius <= int(c) <= self.radius for c in x)

    def flat_index(self, x) -> int:
        return int(np.ravel_multi_index(self.index_of(x), self.shape))

    def neighbors(self, x):
        """
        Все 2d соседей узла x с учётом периодичности (в локальных координатах).
        """
        out = []
        for i in range(self.dim):
            for step in (1, -1):
                y = list(x)
                y[i] = (int(y[i]) + step + self.radius) % self.side - self.radius
                out.append(tuple(y))
        return out


@dataclass(frozen=True)
class DirichletDomain:
    """
    Дискретизация единичного куба D = (0,1)^d с шагом ε = 1/N.
    Массив значений имеет форму (N+1,)^d: индекс k соответствует точке εk.
    interior: узлы D^ε (все координаты в 1..N-1),
    boundary: внешняя вершинная граница ∂D^ε (ровно одна координата в {0, N}).
    Угловые узлы не принадлежат ни одному множеству, но хранятся и закрепляются граничными данными.
    """
    dim: int
    n: int

    periodic = False

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"Domain dimension must be >= 2, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"Mesh parameter N must be >= 2, got {self.n}")

    @property
    def eps(self) -> float:
        return 1.0 / self.n

    @property
    def scale(self) -> float:
        return float(self.n)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n + 1,) * self.dim

    @property
    def n_sites(self) -> int:
        return (self.n + 1) ** self.dim

    @property
    def origin(self) -> Tuple[int, ...]:
        return (0,) * self.dim

    def _extreme_count(self) -> np.ndarray:
        idx = np.indices(self.shape)
        return ((idx == 0) | (idx == self.n)).sum(axis=0)

    @property
    def interior(self) -> np.ndarray:
        return self._extreme_count() == 0

    @property
    def boundary(self) -> np.ndarray:
        return self._extreme_count() == 1

    @property
    def pinned(self) -> np.ndarray:
        # всё, что не является внутренним узлом, закрепляется данными
        return ~self.interior

    @property
    def n_interior(self) -> int:
        return (self.n - 1) ** self.dim

    def edge_mask(self) -> np.ndarray:
        """
        Маска положительно ориентированных рёбер (x, x+εe_i), форма (d, *shape):
        оба конца в D^ε ∪ ∂D^ε и хотя бы один конец внутренний.
        """
        closure = self.interior | self.boundary
        inner = self.interior
        masks = []
        for i in range(self.dim):
            fwd_closure = np.zeros_like(closure)
            fwd_inner = np.zeros_like(inner)
            sl_dst = [slice(None)] * self.dim
            sl_src = [slice(None)] * self.dim
            sl_dst[i] = slice(0, self.n)
            sl_src[i] = slice(1, self.n + 1)
            fwd_closure[tuple(sl_dst)] = closure[tuple(sl_src)]
            fwd_inner[tuple(sl_dst)] = inner[tuple(sl_src)]
            masks.append(closure & fwd_closure & (inner | fwd_inner))
        return np.stack(masks)

    def coords(self) -> np.ndarray:
        """
        Макроскопические координаты узлов, форма (d, *shape).
        """
        return np.indices(self.shape) * self.eps

    def contains(self, x) -> bool:
        if len(x) != self.dim:
            return False
        if not all(0 <= int(c) <= self.n for c in x):
            return False
        idx = tuple(int(c) for c in x)
        return bool(self.interior[idx] or self.boundary[idx])

    def index_of(self, x) -> Tuple[int, ...]:
        return tuple(int(c) for c in x)

    def flat_index(self, x) -> int:
        return int(np.ravel_multi_index(self.index_of(x), self.shape))


@dataclass(frozen=True)
class ParabolicCylinder:
    """
    Параболический цилиндр (s₋, s₊) × (center + Λ_radius).
    radius=None означает весь тор (или все внутренние узлы области Дирихле).
    """
    s_minus: float
    s_plus: float
    grid: object = None
    center: Optional[Tuple[int, ...]] = None
    radius: Optional[int] = None

    def __post_init__(self):
        if not self.s_minus < self.s_plus:
            raise ValueError(f"Cylinder needs s_minus < s_plus, got ({self.s_minus}, {self.s_plus})")
        if self.radius is not None and self.radius < 0:
            raise ValueError("Cylinder radius must be nonnegative")

    @classmethod
    def q(cls, grid, radius: Optional[int] = None, top: float = 0.0, center=None):
        """
        Цилиндр Q_L = (top - L², top) × (center + Λ_L); по умолчанию L — радиус тора.
        """
        L = grid.radius if radius is None else radius
        return cls(top - float(L) ** 2, top, grid, center, L)

    @property
    def length(self) -> float:
        return self.s_plus - self.s_minus

    def site_count(self) -> int:
        if self.radius is not None:
            return (2 * self.radius + 1) ** self.grid.dim
        if self.grid.periodic:
            return self.grid.n_sites
        return self.grid.n_interior

    @property
    def volume(self) -> float:
        return self.length * self.site_count()


@dataclass(frozen=True)
class SpaceTimeField:
    """
    Траектория значений в узлах на равномерной сетке по времени:
    values[n] — срез в момент t0 + n·dt.
    """
    grid: object
    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    @property
    def n_slices(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_slices)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n_slices - 1)

    @property
    def cylinder(self) -> ParabolicCylinder:
        return ParabolicCylinder(self.t0, max(self.t_end, self.t0 + self.dt), self.grid)

    def index_at(self, t: float) -> int:
        n = int(round((t - self.t0) / self.dt))
        return min(max(n, 0), self.n_slices - 1)

    def slice_at(self, t: float) -> np.ndarray:
        return self.values[self.index_at(t)]


@dataclass(frozen=True)
class EdgeField:
    """
    Антисимметричное поле на ориентированных рёбрах в один момент времени.
    values[i][x] = g(x, x+e_i); g(x+e_i, x) = -values[i][x] по соглашению о знаке.
    """
    grid: object
    values: np.ndarray = field(repr=False)

    def value(self, x, y) -> float:
        diff = [int(b) - int(a) for a, b in zip(x, y)]
        if self.grid.periodic:
            side = self.grid.side
            diff = [(c + 1) % side - 1 for c in diff]
        nonzero = [i for i, c in enumerate(diff) if c != 0]
        if len(nonzero) != 1 or abs(diff[nonzero[0]]) != 1:
            raise ValueError(f"Sites {tuple(x)} and {tuple(y)} are not neighbors")
        i = nonzero[0]
        if diff[i] == 1:
            return float(self.values[(i,) + self.grid.index_of(x)])
        return -float(self.values[(i,) + self.grid.index_of(y)])


@dataclass(frozen=True)
class EdgeFieldSeries:
    """
    Рёберное поле, индексированное временем: values[n, i][x] = g(t_n, (x, x+e_i)).
    Используется для потоков V'(q+∇φ) и коэффициентов a(t, e).
    """
    grid: object
    t0: float
    dt: float
    values: np.ndarray = field(repr=False)

    @property
    def n_slices(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_slices)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n_slices - 1)

    def index_at(self, t: float) -> int:
        n = int(round((t - self.t0) / self.dt))
        return min(max(n, 0), self.n_slices - 1)

    def slice_at(self, t: float) -> EdgeField:
        return EdgeField(self.grid, self.values[self.index_at(t)])
