from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class NoiseSource:
    """
    Детерминированный генератор гауссовых приращений со счётчиком.
    Ключ (seed, replica) задаёт ключ Philox, счётчик — (шаг, сторона, канал).
    window_origin/window_shape: бокс Z^d, который адресует один поток шагов;
    если окно не задано, узлы нумеруются по решётке, которая запрашивает шум.
    """
    seed: int
    replica: int = 0
    dt: float = 1.0
    channel: int = 0
    window_origin: Optional[Tuple[int, ...]] = None
    window_shape: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.replica < 0 or self.channel < 0:
            raise ValueError("Replica and channel ids must be nonnegative")
        if (self.window_origin is None) != (self.window_shape is None):
            raise ValueError("Noise window needs both origin and shape")
