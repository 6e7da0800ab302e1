from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Potential:
    """
    Потенциал взаимодействия: вычислители V, V', V'' и сертифицированные
    константы эллиптичности c₋ ≤ V'' ≤ c₊.
    """
    name: str
    V: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dV: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    d2V: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    c_minus: float
    c_plus: float
    symmetric: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.c_minus <= self.c_plus < np.inf):
            raise ValueError(f"Invalid ellipticity constants ({self.c_minus}, {self.c_plus})")

    @property
    def is_gaussian(self) -> bool:
        return self.name == "quadratic"

    def describe(self) -> dict:
        return {"kind": self.name, **self.params}
