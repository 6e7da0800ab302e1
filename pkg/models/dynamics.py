from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from models.potential import Potential


@dataclass(frozen=True)
class SlopePath:
    """
    Кусочно-постоянный наклон q(t) = slopes[i] на [breakpoints[i], breakpoints[i+1]).
    """
    breakpoints: Tuple[float, ...]
    slopes: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(self.slopes) != len(bp) - 1 or len(self.slopes) == 0:
            raise ValueError("Slope path needs exactly one slope per breakpoint interval")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("Slope path breakpoints must be strictly increasing")
        dims = {len(s) for s in self.slopes}
        if len(dims) != 1:
            raise ValueError("All slopes of a path must share the dimension")

    @classmethod
    def constant(cls, p):
        return cls((-np.inf, np.inf), (tuple(float(c) for c in p),))

    @classmethod
    def from_arrays(cls, breakpoints, slopes):
        return cls(tuple(float(b) for b in breakpoints),
                   tuple(tuple(float(c) for c in s) for s in np.asarray(slopes, dtype=float)))

    @property
    def dim(self) -> int:
        return len(self.slopes[0])

    @property
    def is_constant(self) -> bool:
        return len(self.slopes) == 1

    def covers(self, s_minus: float, s_plus: float) -> bool:
        return self.breakpoints[0] <= s_minus and self.breakpoints[-1] >= s_plus

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        i = min(max(i, 0), len(self.slopes) - 1)
        return np.asarray(self.slopes[i], dtype=float)

    def scaled_time(self, factor: float) -> "SlopePath":
        """
        Тот же путь во времени t·factor (переход к микроскопическому времени t/ε²).
        """
        return SlopePath(tuple(b * factor for b in self.breakpoints), self.slopes)


def stable_dt(dim: int, c_plus: float) -> float:
    return 1.0 / (8.0 * dim * c_plus)


@dataclass(frozen=True)
class SimConfig:
    """
    Параметры одной симуляции: потенциал, решётка, шаг, горизонт, наклон, шум, burn-in.
    """
    potential: Potential
    dim: int
    radius: int
    horizon: float
    seed: int
    replicas: int = 1
    dt: Optional[float] = None
    slope: Optional[SlopePath] = None
    burn_in: Optional[float] = None
    record_dt: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        limit = stable_dt(self.dim, self.potential.c_plus)
        if self.dt is None:
            object.__setattr__(self, "dt", limit)
        elif self.dt > limit * (1 + 1e-12):
            raise ValueError(f"unstable time step {self.dt} > {limit}")
        if self.slope is None:
            object.__setattr__(self, "slope", SlopePath.constant((0.0,) * self.dim))
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")


@dataclass(frozen=True)
class ModeDecay:
    """
    Скорость затухания фурье-мод одного уровня λ: подогнанная по автокорреляции
    и точная для явной схемы -log(1 - Δt·λ)/Δt.
    """
    eigenvalue: float
    multiplicity: int
    ratio: float
    fitted_rate: float
    scheme_rate: float

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_rate - self.scheme_rate) / self.scheme_rate
