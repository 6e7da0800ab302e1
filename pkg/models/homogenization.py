from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class FluxEstimate:
    """
    Оценка τ_L(p) = E[(V'(p+∇φ))_{Q_{L/2}}] по репликам.
    """
    slope: object
    window: object
    replicas: int
    mean: np.ndarray
    stderr: np.ndarray
    samples: np.ndarray = field(repr=False)
    failed: int = 0

    @property
    def flagged(self) -> bool:
        return self.failed > 0


@dataclass(frozen=True)
class HessianEstimate:
    """
    Матрица H[i, j] = ∂_i τ_L(p)_j со стандартными ошибками.
    """
    slope: np.ndarray
    matrix: np.ndarray
    stderr: np.ndarray
    replicas: int
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def eigenvalues(self) -> np.ndarray:
        sym = 0.5 * (self.matrix + self.matrix.T)
        return np.linalg.eigvalsh(sym)

    @property
    def positive(self) -> bool:
        return bool(np.all(self.eigenvalues > 0))


@dataclass(frozen=True)
class FluxDecayReport:
    ells: Tuple[int, ...]
    flux_variance: np.ndarray
    flux_variance_se: np.ndarray
    gradient_variance: np.ndarray
    gradient_variance_se: np.ndarray
    flux_fit: Optional[object] = None
    gradient_fit: Optional[object] = None


@dataclass(frozen=True)
class CorrectorFluctuationRow:
    radius: int
    variance: float
    variance_se: float
    l2_mean: float
    l2_se: float
    gradient_q999: float
    exact_variance: Optional[float] = None


@dataclass(frozen=True)
class CorrectorFluctuationReport:
    dim: int
    rows: List[CorrectorFluctuationRow]
    log_slope: Optional[float] = None
    log_intercept: Optional[float] = None
    log_r2: Optional[float] = None
    oracle_slope: Optional[float] = None
    growth: Optional[float] = None


@dataclass(frozen=True)
class SlopeStabilityReport:
    residual: float
    slope_term: float
    corrector_term: float
    fitted_c: float


@dataclass(frozen=True)
class ModulusEstimate:
    """
    Эмпирический модуль линеаризации: пары (|p - q|, невязка) с ошибками.
    """
    slope: np.ndarray
    targets: np.ndarray
    distances: np.ndarray
    residuals: np.ndarray
    stderr: np.ndarray
    replicas: int

    def __post_init__(self):
        if np.any(self.residuals < 0):
            raise ValueError("Residuals must be nonnegative")


@dataclass(frozen=True)
class ExcessProfile:
    """
    Профиль избытка E₁(l), осцилляции (1/l)‖u - (u)_{Q_l}‖ и ‖∇u‖ по масштабам.
    """
    scales: Tuple[int, ...]
    excess: np.ndarray
    oscillation: np.ndarray
    gradient: np.ndarray

    def __post_init__(self):
        if np.any(self.excess < 0):
            raise ValueError("Excess must be nonnegative")


@dataclass(frozen=True)
class TwoScaleExpansion:
    """
    Двухмасштабное разложение w^ε = ū^ε + ε Σ_y χ_y φ_{Q_y}(t/ε², x/ε; ξ_y(t)).
    chi: веса разбиения единицы (n_y, *shape); xi — наклоны (n_blocks, n_y, d)
    на временных блоках block_edges; correctors — траектории на торах Q_y.
    gradient/slope_remainder/corrector_remainder: рёберные поля (T, d, *shape)
    в тождестве ∇w = Σ χ⃗_y ∇v_y + остаток.
    """
    ubar: object
    kappa: float
    mesoscopic_radius: int
    points: np.ndarray
    chi: np.ndarray = field(repr=False)
    block_edges: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    interior_points: np.ndarray = field(repr=False)
    correctors: list = field(repr=False)
    w: object = field(repr=False)
    gradient: np.ndarray = field(repr=False)
    weighted_gradient: np.ndarray = field(repr=False)
    slope_remainder: np.ndarray = field(repr=False)
    corrector_remainder: np.ndarray = field(repr=False)
    corrector_values: np.ndarray = field(repr=False)

    @property
    def eps(self) -> float:
        return self.ubar.grid.eps


@dataclass(frozen=True)
class ErrorTermReport:
    cell: Tuple[int, int]
    gradient_term: float
    slope_term: float
    corrector_term: float

    @property
    def value(self) -> float:
        return self.gradient_term + self.slope_term + self.corrector_term
