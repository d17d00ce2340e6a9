"""Wide-width limit of the network: the kernel Markov chain and the limiting
Gaussian-mixture prior and posterior.

The chain starts from ``K1 = c_b 11^T + c_w x^T x / n0`` and steps

    K_l = c_b 11^T + c_w (a E[s(z) s(z)^T | K_{l-1}] + sum_j T_j s(z_j) s(z_j)^T)

with ``z, z_j ~ N(0, K_{l-1})`` and ``T_j`` the points of a Poisson process
with intensity ``x**(-3/2) dx`` (when the layer has a jump part).  The
expectation is estimated by Monte Carlo so that any activation works.

Given ``K = K_{L+1}`` the limit output is ``N(0, I (x) K)`` under the prior.
Under the Gaussian likelihood ``exp(-sum ||xi(i) - y(i)||**2)`` the output
given ``K`` is ``N(lambda, I (x) D^{-1})`` with ``D = 2I + K^{-1}`` and
``lambda = 2 y D^{-1}``, and ``K`` itself is drawn from its prior law
reweighted by the marginal likelihood

    m(K) = det(I + 2K)**(-n_out/2) exp(-sum_r y_r^T (I + 2K)^{-1} y_r),

which is at most 1 and is used as a rejection acceptance probability.  When
no layer has a jump part the chain is deterministic (up to Monte Carlo
error) and no reweighting is needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .linalg import NotPdError, rank, spd_factorize, spd_inverse
from .network import Activation, Architecture, get_activation
from .rand import DEFAULT_POISSON_EPS, sample_poisson_point_batch, sample_poisson_points

__all__ = [
    "LayerLimit",
    "LimitSpec",
    "KernelChain",
    "LimitDraw",
    "ProposalBudgetExceeded",
    "limit_spec_for",
    "k1",
    "k_step",
    "kernel_chain",
    "sample_kernel_chains",
    "limit_posterior_params",
    "log_marginal_likelihood",
    "sample_limit_posterior",
    "sample_limit_prior",
    "DEFAULT_LIMIT_MC",
    "MODEL1_DRIFT",
]

DEFAULT_LIMIT_MC = 100_000
# E[(WE)**2] for WE ~ Weibull(1, 1/2)
MODEL1_DRIFT = 24.0


class ProposalBudgetExceeded(RuntimeError):
    """A rejection loop hit its proposal budget without accepting."""


@dataclass(frozen=True)
class LayerLimit:
    """Limit law of ``sum_j V_j`` for one hidden layer: drift ``a`` plus an
    optional ``x**(-3/2)`` jump part truncated at ``levy_eps``."""

    drift: float
    levy_eps: Optional[float] = None
    mc_samples: int = DEFAULT_LIMIT_MC

    def __post_init__(self):
        if self.drift < 0:
            raise ValueError("drift must be >= 0")
        if self.drift == 0 and self.levy_eps is None:
            raise ValueError("a layer with zero drift needs a jump part")
        if self.levy_eps is not None and self.levy_eps <= 0:
            raise ValueError("levy_eps must be positive")
        if self.drift > 0 and self.mc_samples < 2:
            raise ValueError("mc_samples must be >= 2")


@dataclass(frozen=True)
class LimitSpec:
    layers: tuple = ()

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def random(self) -> bool:
        """Whether the chain has a jump part anywhere (a non-degenerate mixture)."""
        return any(l.levy_eps is not None for l in self.layers)


def limit_spec_for(arch: Architecture, mc_samples: int = DEFAULT_LIMIT_MC, eps: float = DEFAULT_POISSON_EPS) -> LimitSpec:
    """The limit pair of each hidden layer's variance model.

    ``fixed`` has drift 1, ``model1`` drift 24, ``model2`` the pure jump part.
    """
    table = {
        "fixed": LayerLimit(1.0, None, mc_samples),
        "model1": LayerLimit(MODEL1_DRIFT, None, mc_samples),
        "model2": LayerLimit(0.0, eps, mc_samples),
    }
    return LimitSpec(tuple(table[m] for m in arch.variance_models))


@dataclass
class KernelChain:
    matrices: list
    stderr: list
    seed: Optional[int] = None
    mc_samples: Optional[int] = None
    neglected_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def last(self) -> np.ndarray:
        return self.matrices[-1]


def k1(x, c_b: float, c_w: float) -> np.ndarray:
    """First kernel, entries ``c_b + c_w <x(i), x(i')> / n0``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n0, d = x.shape
    if rank(x) < d:
        warnings.warn("input points are linearly dependent; the limit kernels may be singular", stacklevel=2)
    k = c_b + c_w * (x.T @ x) / n0
    return 0.5 * (k + k.T)


def _second_moment(f: np.ndarray):
    m = f.shape[0]
    mean = f.T @ f / m
    f2 = f * f
    var = (f2.T @ f2 / m - mean**2) * m / (m - 1)
    return mean, np.sqrt(np.maximum(var, 0.0) / m)


def k_step(rng, k_prev, layer: LayerLimit, c_b: float, c_w: float, activation: Activation = "relu", levy_rng=None):
    """One step of the kernel chain.

    Returns ``(K, stderr)`` where ``stderr`` holds the Monte Carlo standard
    error of each entry of ``K`` (only the drift term is estimated).  The jump
    part draws from ``levy_rng`` when given, else from ``rng``.
    """
    s = get_activation(activation)
    k_prev = np.asarray(k_prev, dtype=float)
    d = k_prev.shape[0]
    lower = spd_factorize(k_prev).lower
    acc = np.zeros((d, d))
    se = np.zeros((d, d))
    if layer.drift > 0:
        f = s(rng.standard_normal((layer.mc_samples, d)) @ lower.T)
        mean, err = _second_moment(f)
        acc += layer.drift * mean
        se = c_w * layer.drift * err
    if layer.levy_eps is not None:
        lr = rng if levy_rng is None else levy_rng
        t = sample_poisson_points(lr, layer.levy_eps).points
        f = s(lr.standard_normal((t.size, d)) @ lower.T)
        acc += (f * t[:, None]).T @ f
    k = c_b * np.ones((d, d)) + c_w * acc
    return 0.5 * (k + k.T), 0.5 * (se + se.T)


def kernel_chain(rng, x, spec: LimitSpec, c_b: float = 1.0, c_w: float = 1.0, activation: Activation = "relu", levy_rng=None) -> KernelChain:
    """One realization ``K1, ..., K_{L+1}`` of the chain."""
    k = k1(x, c_b, c_w)
    mats, errs = [k], [np.zeros_like(k)]
    for layer in spec.layers:
        k, e = k_step(rng, k, layer, c_b, c_w, activation, levy_rng=levy_rng)
        mats.append(k)
        errs.append(e)
    mc = max((l.mc_samples for l in spec.layers if l.drift > 0), default=None)
    lost = sum(2.0 * np.sqrt(l.levy_eps) for l in spec.layers if l.levy_eps is not None)
    return KernelChain(mats, errs, mc_samples=mc, neglected_mass=float(lost))


def _batched_lower(k: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        return np.stack([spd_factorize(0.5 * (m + m.T)).lower for m in k])


def sample_kernel_chains(rng, x, spec: LimitSpec, c_b: float, c_w: float, activation: Activation, size: int) -> np.ndarray:
    """``size`` independent final kernels ``K_{L+1}``, shape ``(size, d, d)``.

    Same law as :func:`kernel_chain`; the jump sums are vectorized across
    chains, the drift expectation is estimated chain by chain.
    """
    s = get_activation(activation)
    k = np.broadcast_to(k1(x, c_b, c_w), (size,) + (np.shape(x)[1],) * 2).copy()
    d = k.shape[-1]
    ones = np.ones((d, d))
    for layer in spec.layers:
        lower = _batched_lower(k)
        acc = np.zeros_like(k)
        if layer.drift > 0:
            for b in range(size):
                f = s(rng.standard_normal((layer.mc_samples, d)) @ lower[b].T)
                acc[b] += layer.drift * (f.T @ f) / layer.mc_samples
        if layer.levy_eps is not None:
            t = sample_poisson_point_batch(rng, layer.levy_eps, size)
            z = rng.standard_normal(t.shape + (d,))
            f = s(z @ np.swapaxes(lower, -1, -2))
            acc += np.swapaxes(f * t[..., None], -1, -2) @ f
        k = c_b * ones + c_w * acc
        k = 0.5 * (k + np.swapaxes(k, -1, -2))
    return k


def limit_posterior_params(k, y):
    """Mean and precision of the limit output given its kernel.

    Returns ``(lam, D)`` with ``D = 2I + K^{-1}`` and ``lam = vec((2 y D^{-1})^T)``,
    i.e. the rows of ``2 y D^{-1}`` concatenated.  The output covariance is
    ``I (x) D^{-1}``.
    """
    k = np.atleast_2d(np.asarray(k, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    kinv = spd_inverse(spd_factorize(k, jitter=False))
    dmat = 2.0 * np.eye(k.shape[0]) + kinv
    dinv = spd_inverse(spd_factorize(dmat, jitter=False))
    lam = 2.0 * y @ dinv
    return lam.reshape(-1), dmat


def log_marginal_likelihood(k, y) -> np.ndarray:
    """``log m(K)`` for one kernel ``(d, d)`` or a stack ``(B, d, d)``."""
    k = np.asarray(k, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    a = np.eye(k.shape[-1]) + 2.0 * k
    lower = _batched_lower(a.reshape((-1,) + a.shape[-2:]))
    logdet = 2.0 * np.sum(np.log(np.diagonal(lower, axis1=-2, axis2=-1)), axis=-1)
    # solve L u = y_r^T for every row of y
    u = np.linalg.solve(lower, np.broadcast_to(y.T, (lower.shape[0],) + y.T.shape))
    quad = np.sum(u * u, axis=(-2, -1))
    out = -0.5 * y.shape[0] * logdet - quad
    return out.reshape(k.shape[:-2])


class LimitDraw(NamedTuple):
    sample: np.ndarray  # (n_out, d)
    mean: np.ndarray  # (n_out, d)
    cov: np.ndarray  # (d, d), shared by every output row
    kernel: np.ndarray  # K_{L+1}
    proposals: int


def _gaussian_rows(rng, mean_rows: np.ndarray, cov: np.ndarray) -> np.ndarray:
    lower = spd_factorize(cov).lower
    z = rng.standard_normal(mean_rows.shape)
    return mean_rows + z @ lower.T


def sample_limit_posterior(
    rng,
    x,
    y,
    spec: LimitSpec,
    c_b: float = 1.0,
    c_w: float = 1.0,
    activation: Activation = "relu",
    max_proposals: int = 1_000_000,
    return_info: bool = False,
    kernel=None,
):
    """One draw ``(n_out, d)`` of the limit output under the posterior.

    ``kernel`` reuses a precomputed ``K_{L+1}`` when the chain is deterministic.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    proposals = 0
    if not spec.random:
        k = kernel if kernel is not None else kernel_chain(rng, x, spec, c_b, c_w, activation).last
        proposals = 1
    else:
        block = 8
        k = None
        while k is None:
            if proposals >= max_proposals:
                raise ProposalBudgetExceeded(f"limit posterior: no kernel accepted in {proposals} proposals")
            n = min(block, max_proposals - proposals)
            ks = sample_kernel_chains(rng, x, spec, c_b, c_w, activation, n)
            accept = 1.0 - rng.random(n) <= np.exp(log_marginal_likelihood(ks, y))
            hit = np.flatnonzero(accept)
            if hit.size:
                proposals += int(hit[0]) + 1
                k = ks[hit[0]]
            else:
                proposals += n
            block = min(2 * block, 256)
    lam, dmat = limit_posterior_params(k, y)
    cov = spd_inverse(spd_factorize(dmat))
    mean = lam.reshape(y.shape)
    sample = _gaussian_rows(rng, mean, cov)
    if return_info:
        return LimitDraw(sample, mean, cov, k, proposals)
    return sample


def sample_limit_prior(
    rng, x, spec: LimitSpec, n_out: int, c_b: float = 1.0, c_w: float = 1.0, activation: Activation = "relu", kernel=None
) -> np.ndarray:
    """One draw ``(n_out, d)`` from ``N(0, I (x) K_{L+1})``; rows are i.i.d. given ``K``.

    ``kernel`` reuses a precomputed ``K_{L+1}`` when the chain is deterministic.
    """
    if kernel is not None and not spec.random:
        k = np.asarray(kernel, dtype=float)
    else:
        k = kernel_chain(rng, x, spec, c_b, c_w, activation).last
    return _gaussian_rows(rng, np.zeros((n_out, k.shape[0])), k)
