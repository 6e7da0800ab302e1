from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class FitResult:
    """
    Степенная подгонка y ≈ exp(log_prefactor)·x^exponent в логарифмических координатах.
    """
    exponent: float
    log_prefactor: float
    r2: float
    residuals: Tuple[float, ...]

    def __post_init__(self):
        if self.r2 > 1 + 1e-12:
            raise ValueError("Coefficient of determination cannot exceed 1")


@dataclass
class ExperimentConfig:
    """
    Конфигурация эксперимента: имя, блок параметров, seed, число реплик, каталог вывода.
    """
    name: str
    params: dict
    seed: int
    replicas: int = 1
    out_dir: str = "./out"
    schema_version: int = 1


@dataclass(frozen=True)
class HydroRow:
    eps: float
    mean_error: float
    stderr: float
    deterministic_error: Optional[float]
    gradient_error: Optional[float]
    replicas: int
    clamped: bool = False


@dataclass(frozen=True)
class HydroReport:
    rows: List[HydroRow]
    fit: Optional[FitResult] = None
    flagged: bool = False
    messages: List[str] = field(default_factory=list)
