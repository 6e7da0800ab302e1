import logging

import numpy as np

from models.potential import Potential

logger = logging.getLogger(__name__)

MOLLIFIER_NODES = 64
LUSIN_RESOLUTION = 1e-4

# узлы квадратуры для свёртки с η на (-1, 1)
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(MOLLIFIER_NODES)


def _bump(s):
    return np.exp(-1.0 / (1.0 - s ** 2))


def _bump_prime(s):
    return _bump(s) * (-2.0 * s / (1.0 - s ** 2) ** 2)


_ETA = _bump(_NODES)
_ETA_PRIME = _bump_prime(_NODES)
_Z0 = float(np.sum(_WEIGHTS * _ETA))
# Σ w·s·η'(s) < 0, нормировка производной свёртки
_Z2 = float(-np.sum(_WEIGHTS * _NODES * _ETA_PRIME))


def quadratic() -> Potential:
    """
    Гауссов случай V(x) = x²/2.
    """
    return Potential(
        name="quadratic",
        V=lambda x: 0.5 * np.asarray(x, dtype=float) ** 2,
        dV=lambda x: np.asarray(x, dtype=float) * 1.0,
        d2V=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        c_minus=1.0,
        c_plus=1.0,
    )


def soft_quartic(a: float) -> Potential:
    """
    V(x) = x²/2 + a·√(1+x²); V'' = 1 + a/(1+x²)^{3/2}, поэтому c₋ = 1, c₊ = 1 + a.
    """
    if not a > 0:
        raise ValueError(f"soft_quartic needs a > 0, got {a}")
    a = float(a)

    def V(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x ** 2 + a * np.sqrt(1.0 + x ** 2)

    def dV(x):
        x = np.asarray(x, dtype=float)
        return x + a * x / np.sqrt(1.0 + x ** 2)

    def d2V(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + a / (1.0 + x ** 2) ** 1.5

    return Potential("soft_quartic", V, dV, d2V, 1.0, 1.0 + a, params={"a": a})


def kinked(b: float) -> Potential:
    """
    V'' = 1 + b·1_{|x|<1}; V' — кусочно-линейная первообразная, V — C^{1,1}.
    """
    if not 0.0 < b < 1.0:
        raise ValueError(f"kinked needs b in (0, 1), got {b}")
    b = float(b)

    def dV(x):
        x = np.asarray(x, dtype=float)
        return x + b * np.clip(x, -1.0, 1.0)

    def V(x):
        x = np.asarray(x, dtype=float)
        inner = 0.5 * b * x ** 2
        outer = b * (np.abs(x) - 0.5)
        return 0.5 * x ** 2 + np.where(np.abs(x) < 1.0, inner, outer)

    def d2V(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + b * (np.abs(x) < 1.0)

    return Potential("kinked", V, dV, d2V, 1.0, 1.0 + b, params={"b": b})


def mollify(V: Potential, kappa: float) -> Potential:
    """
    V_κ = V ⋆ η_κ со стандартной «шапочкой» η(s) = Z⁻¹exp(-1/(1-s²)).
    V_κ'' вычисляется через η' и V', поэтому для разрывной V'' результат непрерывен.
    """
    if not kappa > 0:
        raise ValueError(f"Mollification radius must be positive, got {kappa}")
    kappa = float(kappa)

    def _conv(fn, x, kernel, norm):
        x = np.asarray(x, dtype=float)
        pts = x[..., None] - kappa * _NODES
        out = np.tensordot(fn(pts), _WEIGHTS * kernel, axes=([-1], [0])) / norm
        if not np.all(np.isfinite(out)):
            raise RuntimeError(f"Mollifier quadrature of {V.name} produced non-finite values")
        return out

    def Vk(x):
        return _conv(V.V, x, _ETA, _Z0)

    def dVk(x):
        return _conv(V.dV, x, _ETA, _Z0)

    def d2Vk(x):
        return _conv(V.dV, x, _ETA_PRIME, kappa * _Z2)

    params = dict(V.params)
    params["mollify"] = kappa
    return Potential(V.name, Vk, dVk, d2Vk, V.c_minus, V.c_plus, V.symmetric, params)


def lusin_measure(V: Potential, S: float, kappa: float, eps: float) -> float:
    """
    Мера {x ∈ [-S, S] : |V''(x) - V_κ''(x)| ≥ ε} по равномерной сетке средних точек с шагом h = 1e-4.
    Каждая граница множества определяется с точностью h, так что ошибка не больше h на границу.
    Мера порядка κ, поэтому при κ ≲ 1e-3 (κ < 10h) относительная ошибка выходит за 10 %.
    """
    if S < 1:
        raise ValueError(f"Lusin window needs S >= 1, got {S}")
    if not 0 < eps <= 1:
        raise ValueError(f"Threshold eps must lie in (0, 1], got {eps}")
    h = LUSIN_RESOLUTION
    if kappa < 10.0 * h:
        logger.warning(f"Lusin measure at kappa={kappa} is below the grid resolution {h}; expect errors of order h")
    n = int(round(2.0 * S / h))
    x = -S + h * (np.arange(n) + 0.5)
    Vk = mollify(V, kappa)
    # сетка обрабатывается кусками, чтобы не держать (n, 64) целиком
    count = 0
    for chunk in np.array_split(x, max(1, n // 20000)):
        count += int(np.count_nonzero(np.abs(V.d2V(chunk) - Vk.d2V(chunk)) >= eps))
    return count * (2.0 * S / n)


def potential_from_config(spec: dict) -> Potential:
    """
    Потенциал по блоку конфигурации {"kind": ..., параметры, "mollify": κ (необязательно)}.
    """
    kind = spec.get("kind")
    if kind == "quadratic":
        V = quadratic()
    elif kind == "soft_quartic":
        V = soft_quartic(spec.get("a", 0.5))
    elif kind == "kinked":
        V = kinked(spec.get("b", 0.5))
    else:
        raise ValueError(f"Unknown potential kind: {kind}")
    if spec.get("mollify"):
        V = mollify(V, spec["mollify"])
    logger.debug(f"Potential built: {V.describe()}")
    return V
