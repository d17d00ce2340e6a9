import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import integrate, stats

from depnet.metrics import ks_distance
from depnet.network import Architecture
from depnet.rand import rng_stream
from depnet.wide_limit import (
    LayerLimit,
    LimitSpec,
    k1,
    k_step,
    kernel_chain,
    limit_posterior_params,
    limit_spec_for,
    log_marginal_likelihood,
    sample_kernel_chains,
    sample_limit_posterior,
    sample_limit_prior,
)

X3 = np.eye(4)[:, :3]


def relu_moment(k):
    """E[relu(z_i) relu(z_j)] for z ~ N(0, k): the degree-one arc-cosine kernel."""
    k = np.asarray(k, dtype=float)
    s = np.sqrt(np.outer(np.diag(k), np.diag(k)))
    theta = np.arccos(np.clip(k / s, -1.0, 1.0))
    return s * (np.sin(theta) + (np.pi - theta) * np.cos(theta)) / (2 * np.pi)


def test_arc_cosine_oracle_agrees_with_quadrature():
    k = np.array([[1.25, 1.0], [1.0, 1.25]])
    dist = stats.multivariate_normal(np.zeros(2), k)
    val, _ = integrate.dblquad(lambda b, a: a * b * dist.pdf([a, b]), 0, 12, 0, 12)
    assert_allclose(relu_moment(k)[0, 1], val, rtol=1e-6)
    diag, _ = integrate.quad(lambda z: z * z * stats.norm(0, np.sqrt(1.25)).pdf(z), 0, np.inf)
    assert_allclose(relu_moment(k)[0, 0], diag, rtol=1e-8)


def test_k1_examples():
    assert_allclose(k1(X3, 1.0, 1.0), np.full((3, 3), 1.0) + 0.25 * np.eye(3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert_array_equal(k1(np.zeros((2, 3)), 0.0, 1.0), np.zeros((3, 3)))
    assert_array_equal(k1(X3, 1.0, 0.0), np.ones((3, 3)))


def test_k1_warns_on_dependent_inputs():
    with pytest.warns(UserWarning):
        k1(np.ones((2, 3)), 1.0, 1.0)


def test_zero_drift_without_jumps_is_rejected():
    with pytest.raises(ValueError):
        LayerLimit(0.0)


def test_limit_layers_from_architecture():
    arch = Architecture((4, 5, 5, 5, 1), variance_models=("fixed", "model1", "model2"))
    spec = limit_spec_for(arch, 1000, 1e-4)
    assert [l.drift for l in spec.layers] == [1.0, 24.0, 0.0]
    assert [l.levy_eps for l in spec.layers] == [None, None, 1e-4]
    assert spec.random and spec.depth == 3


def test_model1_step_matches_arc_cosine_oracle():
    k = k1(X3, 1.0, 1.0)
    k2, se = k_step(rng_stream(0), k, LayerLimit(24.0), 1.0, 1.0)
    target = 1.0 + 24.0 * relu_moment(k)
    assert_allclose(target[0, 0], 16.0)
    assert np.all(np.abs(k2 - target) < 4 * se)
    assert np.all(se > 0)


def test_chain_is_symmetric_and_factorizable():
    spec = LimitSpec((LayerLimit(24.0, None, 20_000), LayerLimit(0.0, 1e-4)))
    chain = kernel_chain(rng_stream(1), X3, spec)
    assert len(chain.matrices) == 3
    for k in chain.matrices:
        assert_array_equal(k, k.T)
        np.linalg.cholesky(k)
    assert_allclose(chain.neglected_mass, 2e-2)


def test_deterministic_chain_ignores_jump_stream():
    spec = LimitSpec((LayerLimit(24.0, None, 5_000),) * 2)
    a = kernel_chain(rng_stream(2), X3, spec, levy_rng=rng_stream(3)).last
    b = kernel_chain(rng_stream(2), X3, spec, levy_rng=rng_stream(4)).last
    assert_array_equal(a, b)


def test_batched_chains_match_single_chain_law():
    spec = LimitSpec((LayerLimit(0.0, 1e-3),))
    x = np.eye(2)
    batch = sample_kernel_chains(rng_stream(5), x, spec, 1.0, 1.0, "relu", 3000)
    single = np.array([kernel_chain(rng_stream(6, i), x, spec).last for i in range(3000)])
    for i, j in [(0, 0), (0, 1)]:
        assert ks_distance(batch[:, i, j], single[:, i, j]) < 0.05


def test_limit_posterior_params_examples():
    lam, d = limit_posterior_params([[1.0]], [[1.0]])
    assert_allclose(d, [[3.0]])
    assert_allclose(lam, [2 / 3])
    lam, _ = limit_posterior_params(np.eye(2), np.zeros((1, 2)))
    assert_array_equal(lam, [0.0, 0.0])
    lam, d = limit_posterior_params(np.eye(2), [[1.0, 0.0]])
    assert_allclose(d, 3 * np.eye(2))
    assert_allclose(lam, [2 / 3, 0.0])


def test_limit_posterior_params_structure():
    k = np.array([[2.0, 0.5], [0.5, 1.0]])
    y = np.array([[1.0, -2.0], [0.5, 0.0]])
    lam, d = limit_posterior_params(k, y)
    assert_allclose(d - 2 * np.eye(2), np.linalg.inv(k), rtol=1e-12)
    # rows of the mean are 2 y_r D^{-1}
    assert_allclose(lam.reshape(2, 2), 2 * y @ np.linalg.inv(d), rtol=1e-12)


def test_log_marginal_likelihood_matches_gaussian_convolution():
    # int exp(-||xi - y||^2) N(xi; 0, K) dxi = pi^(d/2) N(y; 0, K + I/2)
    k = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 0.7]])
    y = np.array([[1.0, -0.5, 2.0], [0.0, 0.3, -1.0]])
    ref = sum(1.5 * np.log(np.pi) + stats.multivariate_normal(np.zeros(3), k + 0.5 * np.eye(3)).logpdf(r) for r in y)
    assert_allclose(log_marginal_likelihood(k, y), ref, rtol=1e-12)
    stack = np.stack([k, 2 * k])
    assert_allclose(log_marginal_likelihood(stack, y)[0], ref, rtol=1e-12)
    assert np.all(log_marginal_likelihood(stack, y) <= 0)


def test_model1_limit_posterior_mean():
    spec = LimitSpec((LayerLimit(24.0, None, 20_000),))
    y = np.full((1, 3), 5.1)
    kern = kernel_chain(rng_stream(7), X3, spec).last
    draws = np.array([sample_limit_posterior(rng_stream(8, i), X3, y, spec, kernel=kern) for i in range(10_000)])
    lam, d = limit_posterior_params(kern, y)
    band = 4 * np.sqrt(np.diag(np.linalg.inv(d)) / 10_000)
    assert np.all(np.abs(draws[:, 0, :].mean(0) - lam) < band)


def test_scalar_limit_posterior_mean():
    k, y = 4.0, 1.5
    lam, _ = limit_posterior_params([[k]], [[y]])
    assert_allclose(lam, [2 * y / (2 + 1 / k)])


def test_random_chain_posterior_matches_reweighted_prior():
    # Bayes' rule applied directly: prior limit draws weighted by the likelihood
    spec = LimitSpec((LayerLimit(0.0, 1e-3),))
    x, y = np.array([[1.0]]), np.array([[2.0]])
    prior = np.array([sample_limit_prior(rng_stream(9, i), x, spec, 1) for i in range(40_000)]).ravel()
    w = np.exp(-((prior - y[0, 0]) ** 2))
    post = [sample_limit_posterior(rng_stream(10, i), x, y, spec, return_info=True) for i in range(4000)]
    vals = np.array([p.sample[0, 0] for p in post])
    assert ks_distance(vals, prior, weights_b=w) < 0.04
    # the output is a genuine mixture: total variance exceeds the mean conditional variance
    assert vals.var() > np.mean([p.cov[0, 0] for p in post])


def test_limit_prior_moments():
    spec = LimitSpec((LayerLimit(1.0, None, 10_000),))
    x = np.eye(2)
    kern = kernel_chain(rng_stream(11), x, spec).last
    draws = np.array([sample_limit_prior(rng_stream(12, i), x, spec, 2, kernel=kern) for i in range(10_000)])
    assert np.all(np.abs(draws.mean(0)) < 4 * np.sqrt(np.diag(kern) / 10_000))
    flat = draws[:, 0, :]
    assert np.linalg.norm(np.cov(flat.T) - kern) / np.linalg.norm(kern) < 0.05
    cross = np.corrcoef(draws[:, 0, 0], draws[:, 1, 0])[0, 1]
    assert abs(cross) < 4 / np.sqrt(10_000)


def test_first_kernel_is_prior_covariance_without_hidden_steps():
    # with no hidden step the limit prior is N(0, I (x) K1)
    x = np.array([[1.0, 0.0], [0.5, 2.0]])
    spec = LimitSpec(())
    draws = np.array([sample_limit_prior(rng_stream(13, i), x, spec, 1) for i in range(20_000)])[:, 0, :]
    kk = k1(x, 1.0, 1.0)
    assert np.linalg.norm(np.cov(draws.T) - kk) / np.linalg.norm(kk) < 0.05
