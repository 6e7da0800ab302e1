from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class NormReport:
    """
    Результат измерения нормы: имя, цилиндр, значение, нормировка и флаг сходимости.
    """
    name: str
    value: float
    normalized: bool
    cylinder: Optional[object] = None
    flagged: bool = False
    iterations: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("Norm value must be nonnegative")
