"""Empirical CDFs, two-sample Kolmogorov-Smirnov distances and moment summaries."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EcdfCurve",
    "Summary",
    "ecdf",
    "ks_distance",
    "ks_critical_value",
    "summary",
    "write_ecdf_csv",
    "QUANTILE_LEVELS",
]

QUANTILE_LEVELS = (0.01, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.99)


def _as_sample(a, name="samples") -> np.ndarray:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True)
class EcdfCurve:
    """Right-continuous step function: ``F(x) = heights[k]`` on ``[support[k], support[k+1])``."""

    support: np.ndarray
    heights: np.ndarray

    def __call__(self, x) -> np.ndarray:
        idx = np.searchsorted(self.support, x, side="right")
        return np.where(idx > 0, self.heights[np.maximum(idx - 1, 0)], 0.0)


def ecdf(samples, weights=None) -> EcdfCurve:
    """Empirical distribution function of ``samples`` (optionally weighted)."""
    a = _as_sample(samples)
    if weights is None:
        support, counts = np.unique(a, return_counts=True)
        return EcdfCurve(support, np.cumsum(counts) / a.size)
    w = np.asarray(weights, dtype=float).ravel()
    if w.shape != a.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative, not all zero, one per sample")
    support, inv = np.unique(a, return_inverse=True)
    mass = np.bincount(inv, weights=w)
    heights = np.cumsum(mass) / w.sum()
    heights[-1] = 1.0
    return EcdfCurve(support, heights)


def ks_distance(a, b, weights_a=None, weights_b=None) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` computed exactly on the merged support.

    Optional weights turn either side into a weighted empirical law, e.g.
    a self-normalized importance sample.
    """
    fa = ecdf(a, weights_a)
    fb = ecdf(b, weights_b)
    grid = np.union1d(fa.support, fb.support)
    return float(np.max(np.abs(fa(grid) - fb(grid))))


def ks_critical_value(m: int, n: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample threshold ``c(alpha) sqrt((m + n) / (m n))``, ``c = sqrt(-ln(alpha/2) / 2)``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(np.sqrt(-0.5 * np.log(alpha / 2)) * np.sqrt((m + n) / (m * n)))


@dataclass(frozen=True)
class Summary:
    mean: float
    variance: float
    quantiles: dict


def summary(samples) -> Summary:
    """Mean, unbiased variance (0 for a single point) and linear-interpolation quantiles."""
    a = _as_sample(samples)
    var = float(np.var(a, ddof=1)) if a.size > 1 else 0.0
    qs = np.quantile(a, QUANTILE_LEVELS, method="linear")
    return Summary(float(np.mean(a)), var, {p: float(q) for p, q in zip(QUANTILE_LEVELS, qs)})


def write_ecdf_csv(path, curve: EcdfCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "F"])
        for x, f in zip(curve.support, curve.heights):
            w.writerow([repr(float(x)), repr(float(f))])
