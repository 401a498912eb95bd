"""Confidence intervals, Welch's t-test and Benjamini-Hochberg adjustment."""
import math
from typing import Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import InvalidArgumentError


def _as_samples(samples: Sequence[float], name: str = "samples") -> np.ndarray:
    values = np.asarray(samples, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise InvalidArgumentError(f"{name} needs at least 2 values")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError(f"{name} must be finite")
    return values


def mean_ci95(samples: Sequence[float]) -> Tuple[float, float]:
    """Mean and Student-t 95% half-width."""
    values = _as_samples(samples)
    n = values.size
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    half_width = float(stats.t.ppf(0.975, n - 1)) * sd / math.sqrt(n)
    return mean, half_width


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """
    Two-tailed Welch (unequal variance) t-test.

    Zero variance in both groups with equal means gives (0, 1) by convention.
    Zero variance with different means has no t distribution and raises
    InvalidArgumentError.
    """
    x = _as_samples(a, "a")
    y = _as_samples(b, "b")
    mean_diff = float(x.mean() - y.mean())
    vx = float(x.var(ddof=1)) / x.size
    vy = float(y.var(ddof=1)) / y.size
    se2 = vx + vy
    if se2 == 0.0:
        if mean_diff == 0.0:
            return 0.0, 1.0
        raise InvalidArgumentError("both groups have zero variance and different means")

    t_stat = mean_diff / math.sqrt(se2)
    df = se2**2 / (vx**2 / (x.size - 1) + vy**2 / (y.size - 1))
    p_value = float(2.0 * stats.t.sf(abs(t_stat), df))
    return t_stat, min(1.0, p_value)


def bh_fdr_adjust(pvals: Sequence[float]) -> list:
    """Benjamini-Hochberg step-up q-values, returned in input order."""
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1:
        raise InvalidArgumentError("pvals must be a flat sequence")
    if p.size == 0:
        return []
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidArgumentError("p-values must lie in [0, 1]")

    m = p.size
    order = np.argsort(p, kind="mergesort")
    ranked = p[order] * m / np.arange(1, m + 1)
    # running minimum from the largest p downwards
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.clip(q_sorted, 0.0, 1.0)
    return q.tolist()


def column_mean_ci95(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-column mean and Student-t 95% half-width of a (runs x points) matrix."""
    values = np.asarray(matrix, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 rows to compute a confidence interval")
    n = values.shape[0]
    means = values.mean(axis=0)
    sd = values.std(axis=0, ddof=1)
    return means, float(stats.t.ppf(0.975, n - 1)) * sd / math.sqrt(n)
