from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class ProcessSpec:
    """
    Описание процесса для времени пребывания:
    brownian: X_t = x0 + B_t; edge_gradient: X_t = p_1 + ∇_1φ(t, 0) для динамики Ланжевена.
    """
    kind: str = "brownian"
    dt: float = 1e-3
    horizon: float = 1.0
    x0: float = 0.0
    radius: int = 8
    slope: Tuple[float, ...] = (0.0, 0.0)
    potential: Optional[object] = None
    volatility: float = 1.0

    def __post_init__(self):
        if self.kind not in ("brownian", "edge_gradient"):
            raise ValueError(f"Unknown process kind: {self.kind}")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("Process dt and horizon must be positive")


@dataclass(frozen=True)
class OccupationReport:
    thresholds: np.ndarray
    means: np.ndarray
    stderr: np.ndarray
    slope: float
    intercept: float
    relative_intercept: float
    tail_quantiles: np.ndarray
    replicas: int
    horizon: float
    samples: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class OccupationSetReport:
    intervals: Tuple[Tuple[float, float], ...]
    measure: float
    mean: float
    stderr: float
    ratio: float
    replicas: int
