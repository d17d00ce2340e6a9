"""Seeded random generation for the distributions used by the models.

Every stream is a :class:`numpy.random.Generator` driven by the counter-based
Philox bit generator, keyed by ``SeedSequence(seed, spawn_key=(stream,))``.
The same ``(seed, stream)`` pair always produces the same draws; distinct
stream indices give independent streams.  Reference output for
``rng_stream(0, 0).random(4)`` is pinned in ``tests/test_rand.py``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import spd_factorize

__all__ = [
    "VARIANCE_MODELS",
    "PoissonPointSeries",
    "rng_stream",
    "sample_std_normal",
    "sample_mvn",
    "weibull_half_from_uniform",
    "half_cauchy_from_uniform",
    "sample_weibull_half",
    "sample_half_cauchy",
    "poisson_points_from_exponentials",
    "sample_poisson_points",
    "sample_poisson_point_batch",
    "sample_variance_vector",
    "DEFAULT_POISSON_EPS",
]

VARIANCE_MODELS = ("fixed", "model1", "model2")
DEFAULT_POISSON_EPS = 1e-6


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the generator for ``(seed, stream)``."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def sample_std_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.standard_normal(n)


def sample_mvn(rng: np.random.Generator, mean, cov, size=None) -> np.ndarray:
    """Draw ``mean + L z`` with ``L`` the (jittered) Cholesky factor of ``cov``.

    A zero covariance returns ``mean`` exactly.  ``size`` adds leading
    sample dimensions as in numpy.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    m = mean.shape[0]
    if cov.shape != (m, m):
        raise ValueError(f"covariance shape {cov.shape} does not match mean length {m}")
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (m,)
    if not np.any(cov):
        return np.broadcast_to(mean, shape).copy()
    lower = spd_factorize(cov).lower
    z = rng.standard_normal(shape)
    return mean + z @ lower.T


def weibull_half_from_uniform(u):
    """Inverse survival transform of Weibull(1, 1/2): ``(-ln U)**2``."""
    return np.log(u) ** 2


def half_cauchy_from_uniform(u):
    return np.tan(0.5 * np.pi * np.asarray(u))


def _open_uniform(rng: np.random.Generator, size):
    # Generator.random is on [0, 1); reflect to (0, 1] so log/tan stay finite
    return 1.0 - rng.random(size)


def sample_weibull_half(rng: np.random.Generator, size=None):
    """Weibull(1, 1/2) draws, survival ``P(X > x) = exp(-sqrt(x))``."""
    u = _open_uniform(rng, size)
    return weibull_half_from_uniform(u)


def sample_half_cauchy(rng: np.random.Generator, size=None):
    """Half-Cauchy draws ``tan(pi U / 2)``."""
    u = rng.random(size)
    return half_cauchy_from_uniform(u)


@dataclass(frozen=True)
class PoissonPointSeries:
    """Decreasingly ordered points of the Poisson process with intensity
    ``x**(-3/2) dx`` on ``(0, inf)``, truncated below ``eps``.

    ``neglected_mass`` bounds the expected total mass of the discarded
    points, ``2 * sqrt(eps)``.
    """

    points: np.ndarray
    eps: float
    neglected_mass: float

    def __len__(self) -> int:
        return self.points.size


def poisson_points_from_exponentials(e, eps: float) -> np.ndarray:
    """Map unit exponentials to points ``4 / (E_1 + ... + E_j)**2`` above ``eps``."""
    s = np.cumsum(np.asarray(e, dtype=float))
    t = 4.0 / s**2
    return t[t >= eps]


def sample_poisson_points(rng: np.random.Generator, eps: float = DEFAULT_POISSON_EPS) -> PoissonPointSeries:
    """Ordered points ``T_(1) > T_(2) > ...`` of the ``x**(-3/2)`` process above ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    # T_(j) >= eps  <=>  partial sum <= 2/sqrt(eps)
    threshold = 2.0 / np.sqrt(eps)
    chunk = int(threshold + 4.0 * np.sqrt(threshold)) + 8
    sums = []
    total = 0.0
    while True:
        s = total + np.cumsum(rng.exponential(size=chunk))
        sums.append(s)
        total = s[-1]
        if total > threshold:
            break
    s = np.concatenate(sums)
    s = s[s <= threshold]
    return PoissonPointSeries(4.0 / s**2, float(eps), 2.0 * float(np.sqrt(eps)))


def sample_poisson_point_batch(rng: np.random.Generator, eps: float, size: int) -> np.ndarray:
    """``size`` independent truncated series as a zero-padded ``(size, P)`` array.

    Rows are decreasing; entries below ``eps`` are set to 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    threshold = 2.0 / np.sqrt(eps)
    chunk = int(threshold + 4.0 * np.sqrt(threshold)) + 8
    blocks = []
    total = np.zeros(size)
    while True:
        s = total[:, None] + np.cumsum(rng.exponential(size=(size, chunk)), axis=1)
        blocks.append(s)
        total = s[:, -1]
        if np.all(total > threshold):
            break
    s = np.concatenate(blocks, axis=1)
    keep = s <= threshold
    width = int(keep.sum(axis=1).max(initial=0))
    s = s[:, :width]
    return np.where(keep[:, :width], 4.0 / s**2, 0.0)


def sample_variance_vector(rng: np.random.Generator, model: str, n: int, size=None) -> np.ndarray:
    """Per-neuron variances ``V_1..V_n`` for a layer of width ``n``.

    ``fixed``   -> ``1/n`` (the Gaussian network, and the input layer convention)
    ``model1``  -> ``Y/n`` with ``Y = WE**2``, ``WE ~ Weibull(1, 1/2)``
    ``model2``  -> ``pi**2 Y / n**2`` with ``Y = HC**2``, ``HC`` half-Cauchy
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    shape = (() if size is None else tuple(np.atleast_1d(size))) + (n,)
    if model == "fixed":
        return np.full(shape, 1.0 / n)
    if model == "model1":
        v = sample_weibull_half(rng, shape) ** 2 / n
    elif model == "model2":
        v = np.pi**2 * sample_half_cauchy(rng, shape) ** 2 / n**2
    else:
        raise ValueError(f"unknown variance model {model!r}; expected one of {VARIANCE_MODELS}")
    # a zero uniform has probability 2**-53 per draw; keep V strictly positive
    return np.maximum(v, np.finfo(float).tiny)
