import numpy as np
from scipy.optimize import curve_fit

from models.experiment import FitResult


def _line(x, slope, intercept):
    return slope * x + intercept


def _r2(y, fitted) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def fit_linear(xs, ys):
    """
    Прямая y ≈ slope·x + intercept методом наименьших квадратов.
    Возвращает (slope, intercept, r2, residuals).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("Fit needs two 1-D arrays of equal length")
    if len(x) < 2:
        raise ValueError("Linear fit needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("Fit inputs must be finite")
    popt, _ = curve_fit(_line, x, y, p0=(0.0, float(np.mean(y))))
    fitted = _line(x, *popt)
    return float(popt[0]), float(popt[1]), _r2(y, fitted), y - fitted


def fit_power_law(xs, ys) -> FitResult:
    """
    Степенной закон y ≈ A·x^b: прямая по (log x, log y).
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if len(x) < 3:
        raise ValueError(f"Power-law fit needs at least 3 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Power-law fit needs strictly positive inputs")
    slope, intercept, r2, residuals = fit_linear(np.log(x), np.log(y))
    return FitResult(slope, intercept, min(r2, 1.0), tuple(float(r) for r in residuals))
