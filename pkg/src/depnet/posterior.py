"""Finite-width posterior samplers.

The posterior reweights the prior by ``g(xi, y) = exp(-sum_i ||xi(i) - y(i)||**2)``
evaluated at the network output.  Under it the layer outputs
``Z1, ..., Z_{L+1}`` still form a Markov chain, and

* the weights ``(W, b)`` into layer ``l >= 2`` given ``Z_{l-1} = z`` have density
  proportional to ``p_prior(w) I(w, z, y)``, where ``I`` is the prior
  expectation of ``g`` over the remaining layers (exact at the last layer);
* ``Z1`` has its prior Gaussian law reweighted by ``E[g | Z1]``.

Both are sampled by rejection from the prior, with ``I`` replaced on hidden
layers by the clamped Monte Carlo estimate

    I_hat = mean_r  min(delta, max(1 - delta, Psi_r)),

``Psi_r`` being ``g`` evaluated through an independent replica ``r`` of the
remaining layers.  For a shallow network (L = 1) the conditional law of the
output is Gaussian given ``(Z1, V)``, which gives an exact sampler.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .linalg import spd_factorize
from .network import (
    Architecture,
    LayerDraw,
    first_layer,
    gaussian_log_likelihood,
    get_activation,
    phi_sigma,
    sample_layer,
)
from .rand import sample_variance_vector
from .wide_limit import ProposalBudgetExceeded, log_marginal_likelihood

__all__ = [
    "RejectionConfig",
    "LayerStats",
    "RejectionStats",
    "ProposalBudgetExceeded",
    "ShallowDraw",
    "layer1_covariance",
    "sample_z1_posterior",
    "prior_weight_draw",
    "draw_replicas",
    "propagate",
    "clamped_mean",
    "acceptance_exact_last",
    "acceptance_estimate",
    "estimate_acceptance",
    "rejection_step",
    "first_layer_step",
    "sample_posterior_deep",
    "shallow_conditional",
    "sample_posterior_shallow",
]

REPLICA_REUSE = ("per-sample", "per-proposal")


@dataclass(frozen=True)
class RejectionConfig:
    """Settings of the layered rejection sampler.

    ``n_replicas`` and ``delta`` define the clamped estimator.  With
    ``replica_reuse="per-sample"`` one replica family is drawn per layer per
    output sample and shared by all proposals of that layer;
    ``"per-proposal"`` redraws it for every proposal.
    ``reweight_first_layer=False`` draws ``Z1`` from its prior law without
    the ``E[g | Z1]`` acceptance step.
    """

    n_replicas: int = 100
    delta: float = 0.99
    max_proposals: int = 1_000_000
    replica_reuse: str = "per-sample"
    reweight_first_layer: bool = True

    def __post_init__(self):
        if not 0.5 < self.delta < 1.0:
            raise ValueError("delta must lie in (1/2, 1)")
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be >= 1")
        if self.max_proposals < 1:
            raise ValueError("max_proposals must be >= 1")
        if self.replica_reuse not in REPLICA_REUSE:
            raise ValueError(f"replica_reuse must be one of {REPLICA_REUSE}")


@dataclass
class LayerStats:
    proposals: int = 0
    acceptances: int = 0
    wall_time: float = 0.0

    @property
    def acceptance_rate(self) -> float:
        return self.acceptances / self.proposals if self.proposals else float("nan")


@dataclass
class RejectionStats:
    layers: dict = field(default_factory=dict)

    def record(self, layer: int, proposals: int, acceptances: int, wall_time: float = 0.0) -> None:
        s = self.layers.setdefault(layer, LayerStats())
        s.proposals += proposals
        s.acceptances += acceptances
        s.wall_time += wall_time

    def merge(self, other: "RejectionStats") -> "RejectionStats":
        out = RejectionStats()
        for src in (self, other):
            for layer, s in src.layers.items():
                out.record(layer, s.proposals, s.acceptances, s.wall_time)
        return out


def layer1_covariance(x, arch: Architecture) -> np.ndarray:
    """Covariance ``(x^T | 1) diag(c_w/n0, ..., c_w/n0, c_b) (x^T | 1)^T`` of each row of ``Z1``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n0 = x.shape[0]
    cov = arch.c_w / n0 * (x.T @ x)
    if arch.c_b > 0:
        cov = cov + arch.c_b
    return cov


def sample_z1_posterior(rng, x, arch: Architecture, size=None) -> np.ndarray:
    """Draw ``Z1 = b 1^T + W x`` (shape ``(n1, d)``) from its Gaussian prior law.

    Rows are i.i.d. ``N(0, layer1_covariance(x, arch))``.  This is the
    proposal for the first layer of :func:`sample_posterior_deep`; the
    posterior marginal of ``Z1`` is this law reweighted by ``E[g | Z1]``.
    """
    p = sample_layer(rng, arch, 1, size=size)
    return first_layer(p.bias, p.weight, x)


def prior_weight_draw(rng, arch: Architecture, layer: int, size=None) -> LayerDraw:
    """Prior draw of ``(b, W)`` into ``layer`` (2..L+1) with its variances ``V``.

    ``V`` is fresh on every call: the prior of ``w_b`` is the mixture over ``V``.
    """
    if not 2 <= layer <= arch.depth + 1:
        raise ValueError(f"layer must be in 2..{arch.depth + 1}")
    return sample_layer(rng, arch, layer, size=size)


def draw_replicas(rng, arch: Architecture, first: int, n: int, lead=()) -> tuple:
    """``n`` independent prior replicas of layers ``first..L+1``.

    Each entry is a :class:`LayerDraw` with leading shape ``lead + (n,)``.
    """
    return tuple(sample_layer(rng, arch, l, size=tuple(lead) + (n,)) for l in range(first, arch.depth + 2))


def propagate(replicas, z, activation="relu") -> np.ndarray:
    """Push layer outputs ``z`` of shape ``(P, n_l, d)`` through every replica.

    Returns the network outputs, shape ``(P, N, n_out, d)``.
    """
    out = np.asarray(z, dtype=float)[:, None]
    for p in replicas:
        out = phi_sigma(p.bias, p.weight, out, activation)
    return out


def clamped_mean(psi, delta: float) -> np.ndarray:
    """Average of ``min(delta, max(1 - delta, psi))`` over the last axis."""
    c = np.clip(psi, 1.0 - delta, delta)
    mean = np.clip(np.mean(c, axis=-1), 1.0 - delta, delta)
    # a fully saturated family returns the bound itself, free of rounding in the mean
    mean = np.where(np.all(c == delta, axis=-1), delta, mean)
    return np.where(np.all(c == 1.0 - delta, axis=-1), 1.0 - delta, mean)


def estimate_acceptance(replicas, z, y, delta: float, activation="relu") -> np.ndarray:
    """Clamped Monte Carlo estimate of ``E[g | Z_l = z]`` for a batch ``z`` of shape ``(P, n_l, d)``."""
    psi = np.exp(gaussian_log_likelihood(propagate(replicas, z, activation), y))
    return clamped_mean(psi, delta)


def acceptance_estimate(replicas, proposal: LayerDraw, z_prev, y, delta: float, activation="relu"):
    """Clamped estimate of the acceptance probability of proposed weights into a hidden layer.

    ``proposal`` may be a single draw or a batch; ``replicas`` cover the
    layers after it.  The result lies in ``[1 - delta, delta]``.
    """
    z = phi_sigma(proposal.bias, proposal.weight, z_prev, activation)
    single = z.ndim == 2
    est = estimate_acceptance(replicas, z[None] if single else z, y, delta, activation)
    return float(est[0]) if single else est


def acceptance_exact_last(proposal: LayerDraw, z_last, y, activation="relu"):
    """Exact acceptance ``g(Phi(w_b, s(z_L)), y)`` for the output layer.

    Underflows to exactly 0 for huge residuals; such a proposal is never accepted.
    """
    out = phi_sigma(proposal.bias, proposal.weight, z_last, activation)
    val = np.exp(gaussian_log_likelihood(out, y))
    return float(val) if np.ndim(val) == 0 else val


def _rejection_loop(rng, propose: Callable, acceptance: Callable, budget: int, what: str, max_block: int = 64):
    """Propose in blocks, accept item ``k`` when ``U_k <= acceptance_k``.

    Returns ``(items, index, proposals)``: the block holding the first accepted
    proposal, its index and the number of proposals consumed.
    """
    used = 0
    block = 8
    peak = 0.0
    while used < budget:
        n = min(block, budget - used)
        items = propose(n)
        acc = np.asarray(acceptance(items), dtype=float)
        peak = max(peak, float(acc.max(initial=0.0)))
        u = 1.0 - rng.random(n)
        hit = np.flatnonzero(u <= acc)
        if hit.size:
            return items, int(hit[0]), used + int(hit[0]) + 1
        used += n
        block = min(2 * block, max_block)
    hint = " (every acceptance probability underflowed to 0)" if peak == 0.0 else ""
    raise ProposalBudgetExceeded(f"{what}: no proposal accepted within {budget} proposals{hint}")


def rejection_step(rng, z_prev, arch: Architecture, layer: int, cfg: RejectionConfig, y, replicas=None):
    """Sample ``Z_l`` given ``Z_{l-1} = z_prev`` under the posterior.

    Hidden layers use the clamped estimate, the output layer the exact
    acceptance.  Returns ``(z_next, LayerStats)``.
    """
    if not 2 <= layer <= arch.depth + 1:
        raise ValueError(f"layer must be in 2..{arch.depth + 1}")
    t0 = time.perf_counter()
    act = arch.activation
    z_prev = np.asarray(z_prev, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    last = layer == arch.depth + 1
    if not last and replicas is None and cfg.replica_reuse == "per-sample":
        replicas = draw_replicas(rng, arch, layer + 1, cfg.n_replicas)

    def propose(n):
        return prior_weight_draw(rng, arch, layer, size=n)

    def acceptance(draw):
        z = phi_sigma(draw.bias, draw.weight, z_prev, act)
        if last:
            return np.exp(gaussian_log_likelihood(z, y))
        reps = replicas
        if cfg.replica_reuse == "per-proposal":
            reps = draw_replicas(rng, arch, layer + 1, cfg.n_replicas, lead=(z.shape[0],))
        return estimate_acceptance(reps, z, y, cfg.delta, act)

    draw, k, used = _rejection_loop(
        rng, propose, acceptance, cfg.max_proposals, f"layer {layer}", max_block=512 if last else 64
    )
    z_next = phi_sigma(draw.bias[k], draw.weight[k], z_prev, act)
    return z_next, LayerStats(used, 1, time.perf_counter() - t0)


def first_layer_step(rng, x, arch: Architecture, cfg: RejectionConfig, y):
    """Sample ``Z1`` under the posterior: Gaussian proposal, clamped ``E[g | Z1]`` acceptance."""
    t0 = time.perf_counter()
    y = np.atleast_2d(np.asarray(y, dtype=float))
    act = arch.activation
    replicas = None
    if cfg.replica_reuse == "per-sample":
        replicas = draw_replicas(rng, arch, 2, cfg.n_replicas)

    def propose(n):
        return sample_z1_posterior(rng, x, arch, size=n)

    def acceptance(z):
        reps = replicas
        if reps is None:
            reps = draw_replicas(rng, arch, 2, cfg.n_replicas, lead=(z.shape[0],))
        return estimate_acceptance(reps, z, y, cfg.delta, act)

    z, k, used = _rejection_loop(rng, propose, acceptance, cfg.max_proposals, "layer 1")
    return z[k], LayerStats(used, 1, time.perf_counter() - t0)


def sample_posterior_deep(rng, arch: Architecture, x, y, cfg: RejectionConfig = RejectionConfig()):
    """One posterior draw of the network output ``(n_out, d)`` by layered rejection.

    Returns ``(z_out, RejectionStats)``.
    """
    stats = RejectionStats()
    if cfg.reweight_first_layer:
        z, s = first_layer_step(rng, x, arch, cfg, y)
        stats.record(1, s.proposals, s.acceptances, s.wall_time)
    else:
        z = sample_z1_posterior(rng, x, arch)
        stats.record(1, 1, 1)
    for layer in range(2, arch.depth + 2):
        z, s = rejection_step(rng, z, arch, layer, cfg, y)
        stats.record(layer, s.proposals, s.acceptances, s.wall_time)
    return z, stats


def _features(z1, arch: Architecture) -> np.ndarray:
    """``(s(z1)^T | 1)``, shape ``(..., d, n1 + 1)``; no ones column when ``c_b = 0``."""
    f = np.swapaxes(get_activation(arch.activation)(np.asarray(z1, dtype=float)), -1, -2)
    if arch.c_b > 0:
        f = np.concatenate([f, np.ones(f.shape[:-1] + (1,))], axis=-1)
    return f


def _prior_diag(v, arch: Architecture) -> np.ndarray:
    d = arch.c_w * np.asarray(v, dtype=float)
    if arch.c_b > 0:
        d = np.concatenate([d, np.full(d.shape[:-1] + (1,), arch.c_b)], axis=-1)
    return d


def shallow_conditional(z1, v, arch: Architecture, y):
    """Gaussian law of the output of a shallow network given ``Z1 = z1`` and the
    hidden variances ``V = v``.

    Returns ``(mean, cov, s_mat, mu)``: the output rows are independent with
    means ``mean`` (n2 x d) and common covariance ``cov = F S^{-1} F^T`` where
    ``F = (s(z1)^T | 1)`` and ``S = 2 F^T F + diag(c_w V, c_b)^{-1}``;
    ``mu = 2 y F S^{-1}`` is the conditional mean of ``(W | b)``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    f = _features(z1, arch)
    s_mat = 2.0 * f.T @ f + np.diag(1.0 / _prior_diag(v, arch))
    fac = spd_factorize(s_mat)
    s_inv_ft = np.linalg.solve(s_mat, f.T)
    mu = 2.0 * y @ s_inv_ft.T
    mean = mu @ f.T
    cov = f @ s_inv_ft
    return mean, 0.5 * (cov + cov.T), s_mat, mu


class ShallowDraw(NamedTuple):
    sample: np.ndarray
    z1: np.ndarray
    variance: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    proposals: int


def sample_posterior_shallow(rng, arch: Architecture, x, y, max_proposals: int = 1_000_000, return_info: bool = False):
    """Exact posterior draw of the output ``(n2, d)`` of a shallow network.

    ``(Z1, V)`` is drawn from the prior and accepted with probability equal to
    the marginal likelihood ``m = det(I + 2C)**(-n2/2) exp(-sum_r y_r^T (I + 2C)^{-1} y_r)``,
    ``C = F diag(c_w V, c_b) F^T``.  The output is then drawn from the Gaussian
    of :func:`shallow_conditional`.
    """
    if arch.depth != 1:
        raise ValueError("the exact sampler needs a shallow network (L = 1)")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n1 = arch.widths[1]
    model = arch.variance_model(2)

    def propose(n):
        z1 = sample_z1_posterior(rng, x, arch, size=n)
        v = sample_variance_vector(rng, model, n1, size=n)
        return z1, v

    def acceptance(items):
        z1, v = items
        f = _features(z1, arch)
        c = (f * _prior_diag(v, arch)[:, None, :]) @ np.swapaxes(f, -1, -2)
        return np.exp(log_marginal_likelihood(c, y))

    (z1s, vs), k, used = _rejection_loop(rng, propose, acceptance, max_proposals, "shallow posterior", max_block=512)
    z1, v = z1s[k], vs[k]
    _, _, s_mat, mu = shallow_conditional(z1, v, arch, y)
    # W_b rows ~ N(mu_r, S^{-1}) via the Cholesky factor of S; output = W_b F^T
    lower = spd_factorize(s_mat).lower
    e = rng.standard_normal(mu.shape)
    w = mu + np.linalg.solve(lower.T, e.T).T
    f = _features(z1, arch)
    sample = w @ f.T
    if return_info:
        mean, cov, _, _ = shallow_conditional(z1, v, arch, y)
        return ShallowDraw(sample, z1, v, mean, cov, used)
    return sample
