import numpy as np


def standard_error(samples, axis: int = 0):
    """
    Стандартная ошибка среднего: std(ddof=1) / √n.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    if n < 2:
        raise ValueError("Standard error needs at least two samples")
    return np.std(samples, axis=axis, ddof=1) / np.sqrt(n)


def mean_and_se(samples, axis: int = 0):
    samples = np.asarray(samples, dtype=float)
    return np.mean(samples, axis=axis), standard_error(samples, axis=axis)


def jackknife_variance(samples, axis: int = 0):
    """
    Выборочная дисперсия (ddof=1) и её ошибка по схеме «складного ножа».
    """
    x = np.moveaxis(np.asarray(samples, dtype=float), axis, 0)
    n = x.shape[0]
    if n < 3:
        raise ValueError("Jackknife needs at least three samples")
    variance = np.var(x, axis=0, ddof=1)
    total = x.sum(axis=0)
    total_sq = (x ** 2).sum(axis=0)
    # дисперсии без i-го образца в закрытой форме
    loo_mean = (total[None] - x) / (n - 1)
    loo_var = ((total_sq[None] - x ** 2) - (n - 1) * loo_mean ** 2) / (n - 2)
    se = np.sqrt((n - 1) / n * np.sum((loo_var - loo_var.mean(axis=0)) ** 2, axis=0))
    return variance, se


def quantile(samples, q: float, axis=None):
    return np.quantile(np.asarray(samples, dtype=float), q, axis=axis)
