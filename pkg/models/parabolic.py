from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class HeatKernelTable:
    """
    Таблица ядра P_a(t, ·; s, y) на срезах t = s + n·dt, начальные данные δ_y - 1/|Λ|.
    """
    grid: object
    s: float
    y: Tuple[int, ...]
    dt: float
    values: np.ndarray = field(repr=False)
    environment: object = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.s + self.dt * np.arange(self.values.shape[0])

    def at(self, t: float) -> np.ndarray:
        """
        P(t, ·); для t < s ядро равно нулю.
        """
        if t < self.s - 1e-12:
            return np.zeros(self.grid.shape)
        n = min(int(round((t - self.s) / self.dt)), self.values.shape[0] - 1)
        return self.values[n]


@dataclass(frozen=True)
class EffectiveGradient:
    """
    Вычислитель p ↦ D_pσ̄(p).
    identity: точный случай квадратичного потенциала;
    tabulated: покомпонентная монотонная кусочно-линейная интерполяция g(p_i)
    по сетке наклонов вдоль оси (решёточная симметрия переносит её на все оси);
    callable: произвольное монотонное отображение (для проверок оператора).
    """
    kind: str
    slopes: Optional[np.ndarray] = field(default=None, repr=False)
    values: Optional[np.ndarray] = field(default=None, repr=False)
    fn: Optional[Callable] = field(default=None, repr=False)
    lipschitz_bound: Optional[float] = None

    @classmethod
    def identity(cls):
        return cls("identity", lipschitz_bound=1.0)

    @classmethod
    def tabulated(cls, slopes, values):
        s = np.asarray(slopes, dtype=float)
        g = np.asarray(values, dtype=float)
        if s.ndim != 1 or s.shape != g.shape or len(s) < 2:
            raise ValueError("Tabulated effective gradient needs matching 1-D slope and value arrays")
        if np.any(np.diff(s) <= 0):
            raise ValueError("Slope grid must be strictly increasing")
        if np.allclose(s, -s[::-1]):
            # нечётная симметризация для симметричного потенциала
            g = 0.5 * (g - g[::-1])
        g = np.maximum.accumulate(g)
        lip = float(np.max(np.diff(g) / np.diff(s)))
        return cls("tabulated", s, g, lipschitz_bound=max(lip, 1e-12))

    @classmethod
    def from_callable(cls, fn, lipschitz: float):
        return cls("callable", fn=fn, lipschitz_bound=float(lipschitz))

    @property
    def lipschitz(self) -> float:
        return float(self.lipschitz_bound)

    def evaluate(self, P: np.ndarray, axis: int = 0):
        """
        Применяет D_pσ̄ к полю векторов P (компоненты вдоль оси axis).
        Возвращает (значения, число вычислений вне таблицы).
        """
        if self.kind == "identity":
            return np.array(P, dtype=float, copy=True), 0
        if self.kind == "callable":
            return np.asarray(self.fn(P, axis), dtype=float), 0
        lo, hi = self.slopes[0], self.slopes[-1]
        clamped = int(np.count_nonzero((P < lo) | (P > hi)))
        out = np.interp(np.clip(P, lo, hi), self.slopes, self.values)
        return out, clamped

    def __call__(self, p):
        values, _ = self.evaluate(np.asarray(p, dtype=float), axis=-1)
        return values
