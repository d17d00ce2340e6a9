import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from depnet.network import (
    Architecture,
    DataSet,
    LayerDraw,
    NetworkParams,
    forward,
    gaussian_log_likelihood,
    get_activation,
    phi_sigma,
    sample_layer,
    sample_prior_params,
)
from depnet.rand import rng_stream


def _layer(b, w):
    b, w = np.atleast_1d(np.asarray(b, float)), np.atleast_2d(np.asarray(w, float))
    return LayerDraw(b, w, np.ones(w.shape[1]), w)


def test_architecture_validation():
    arch = Architecture((4, 3, 3, 1), variance_models="model1")
    assert arch.depth == 2 and arch.n_in == 4 and arch.n_out == 1
    assert arch.variance_model(1) == "fixed"
    assert arch.variance_model(2) == "model1"
    with pytest.raises(ValueError):
        Architecture((4, 1))
    with pytest.raises(ValueError):
        Architecture((4, 0, 1))
    with pytest.raises(ValueError):
        Architecture((4, 2, 1), c_w=0.0)
    with pytest.raises(ValueError):
        Architecture((4, 2, 1), c_b=-1.0)
    with pytest.raises(ValueError):
        Architecture((4, 2, 1), variance_models=("model1", "model2"))
    with pytest.raises(ValueError):
        Architecture((4, 2, 1), activation="tanh-ish")


def test_relu_at_zero():
    assert get_activation("relu")(np.array([0.0, -1.0, 2.0])).tolist() == [0.0, 0.0, 2.0]


def test_zero_bias_prior_is_exactly_zero():
    params = sample_prior_params(rng_stream(0), Architecture((3, 4, 2), c_b=0.0, variance_models="model2"))
    for b in params.biases:
        assert_array_equal(b, 0.0)


def test_first_layer_weight_variance():
    draw = sample_layer(rng_stream(1), Architecture((4, 5, 1)), 1, size=50_000)
    assert abs(draw.weight.var() - 0.25) < 0.002


def test_model1_weight_variance_matches_moment_oracle():
    n = 8
    arch = Architecture((4, n, n, 1), variance_models="model1")
    draw = sample_layer(rng_stream(2), arch, 2, size=40_000)
    # Var(W) = c_w E[V] = E[WE^2] / n, with the second moment taken from scipy's Weibull law
    target = stats.weibull_min(c=0.5).moment(2) / n
    assert abs(np.mean(draw.weight**2) / target - 1) < 0.05


def test_column_entries_share_one_variance():
    draw = sample_layer(rng_stream(3), Architecture((3, 5, 4, 1), variance_models="model2"), 2)
    ratio = draw.weight / draw.normal
    assert_allclose(ratio, np.broadcast_to(np.sqrt(draw.variance), ratio.shape), rtol=1e-12)
    assert_allclose(ratio, np.broadcast_to(ratio[0], ratio.shape), rtol=1e-12)


def test_forward_hand_examples():
    params = NetworkParams((_layer(1.0, 2.0), _layer(1.0, 3.0)))
    z1, z2 = forward(params, np.array([[1.0]]))
    assert_array_equal(z1, [[3.0]])
    assert_array_equal(z2, [[10.0]])
    z1, z2 = forward(params, np.array([[-1.0]]))
    assert_array_equal(z1, [[-1.0]])
    assert_array_equal(z2, [[1.0]])


def test_forward_zero_network():
    params = NetworkParams((_layer(np.zeros(3), np.zeros((3, 2))), _layer(np.zeros(1), np.zeros((1, 3)))))
    for z in forward(params, np.ones((2, 4))):
        assert_array_equal(z, 0.0)


def test_phi_sigma_examples():
    b = np.array([1.0, 2.0])
    m = np.arange(6.0).reshape(3, 2)
    assert_array_equal(phi_sigma(b, np.zeros((2, 3)), m), [[1.0, 1.0], [2.0, 2.0]])
    w = np.arange(6.0).reshape(2, 3) - 2
    assert_array_equal(phi_sigma(np.zeros(2), w, m - 3, "identity"), w @ (m - 3))
    with pytest.raises(ValueError):
        phi_sigma(b, np.zeros((2, 4)), m)


def test_phi_chain_reproduces_forward():
    arch = Architecture((3, 4, 5, 2), variance_models=("model1", "model2"))
    params = sample_prior_params(rng_stream(4), arch)
    x = rng_stream(5).standard_normal((3, 6))
    zs = forward(params, x)
    z = zs[0]
    for p in params.layers[1:]:
        z = phi_sigma(p.bias, p.weight, z)
    assert_array_equal(z, zs[-1])


def test_hidden_permutation_invariance():
    arch = Architecture((2, 4, 1))
    params = sample_prior_params(rng_stream(6), arch)
    x = np.array([[1.0, -0.5], [0.3, 2.0]])
    perm = np.array([2, 0, 3, 1])
    l1, l2 = params.layers
    permuted = NetworkParams((
        LayerDraw(l1.bias[perm], l1.weight[perm], l1.variance, l1.normal[perm]),
        LayerDraw(l2.bias, l2.weight[:, perm], l2.variance[perm], l2.normal[:, perm]),
    ))
    assert_allclose(forward(permuted, x)[-1], forward(params, x)[-1], rtol=1e-14)


def test_log_likelihood():
    y = np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]])
    assert gaussian_log_likelihood(y, y) == 0.0
    assert gaussian_log_likelihood([[2.0]], [[1.0]]) == -1.0
    xi = rng_stream(7).standard_normal((2, 3))
    r = xi - y
    assert_allclose(gaussian_log_likelihood(xi, y), -np.trace(r @ r.T), rtol=1e-12)
    assert gaussian_log_likelihood(xi, y) < 0
    with pytest.raises(ValueError):
        gaussian_log_likelihood(np.zeros((2, 2)), y)


def test_w_b_lists_rows_of_weight_then_bias():
    draw = _layer([7.0, 8.0], [[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(draw.w_b, [1, 2, 7, 3, 4, 8])


def test_dataset_csv_round_trip(tmp_path):
    ds = DataSet(np.array([[1.0, 0.0], [0.5, 2.0]]), np.array([[5.1, 0.1]]))
    ds.to_csv(tmp_path / "d.csv")
    back = DataSet.from_csv(tmp_path / "d.csv")
    assert_array_equal(back.x, ds.x)
    assert_array_equal(back.y, ds.y)
    assert back.d == 2


def test_dataset_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        DataSet(np.ones((2, 3)), np.ones((1, 2)))
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        DataSet.from_csv(tmp_path / "bad.csv")
