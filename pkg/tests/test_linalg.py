import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from depnet.linalg import NotPdError, kron, rank, spd_factorize, spd_inverse, spd_solve, unvec, vec


def test_vec_stacks_columns():
    assert_array_equal(vec([[1, 2], [3, 4]]), [1, 3, 2, 4])
    assert_array_equal(vec(np.array([[1.0], [2.0], [3.0]])), [1, 2, 3])
    assert_array_equal(vec(np.array([[1, 2, 3]]).T), [1, 2, 3])


def test_unvec_inverts_vec():
    a = np.arange(12.0).reshape(3, 4)
    assert_array_equal(unvec(vec(a), 3), a)


def test_kron_examples():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(kron(np.eye(1), b), b)
    assert_array_equal(kron([[1, 2]], [[0], [3]]), [[0, 0], [3, 6]])
    assert_array_equal(kron(np.eye(2), [[5]]), np.diag([5.0, 5.0]))


def test_factorize_identity_and_hand_example():
    assert_allclose(spd_factorize(np.eye(3)).lower, np.eye(3))
    f = spd_factorize([[4.0, 2.0], [2.0, 5.0]])
    assert_allclose(f.lower, [[2.0, 0.0], [1.0, 2.0]], atol=1e-14)
    assert f.jitter == 0.0


def test_factorize_rank_one_without_jitter_fails():
    with pytest.raises(NotPdError):
        spd_factorize([[1.0, 1.0], [1.0, 1.0]], jitter=False)


def test_factorize_rank_one_with_jitter_reports_it():
    f = spd_factorize([[1.0, 1.0], [1.0, 1.0]])
    assert 0 < f.jitter <= 1e-6
    assert_allclose(f.matrix(), [[1.0, 1.0], [1.0, 1.0]] + f.jitter * np.eye(2), atol=1e-14)


def test_factorize_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPdError):
        spd_factorize(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        spd_factorize([[1.0, 0.5], [0.0, 1.0]])


def test_factor_reconstruction_is_tight():
    rng = np.random.default_rng(3)
    g = rng.standard_normal((5, 5))
    a = g @ g.T + 0.1 * np.eye(5)
    f = spd_factorize(a)
    assert np.linalg.norm(f.matrix() - a) / np.linalg.norm(a) < 1e-10
    assert np.all(np.diag(f.lower) > 0)
    assert_allclose(f.logdet(), np.linalg.slogdet(a)[1], rtol=1e-12)


def test_solve_examples():
    b = np.arange(6.0).reshape(3, 2)
    assert_allclose(spd_solve(spd_factorize(np.eye(3)), b), b)
    assert_allclose(spd_solve(spd_factorize(np.diag([2.0, 4.0])), [2.0, 4.0]), [1.0, 1.0])
    assert_allclose(spd_solve(spd_factorize([[4.0, 2.0], [2.0, 5.0]]), [6.0, 7.0]), [1.0, 1.0])
    with pytest.raises(ValueError):
        spd_solve(spd_factorize(np.eye(2)), np.ones(3))


def test_inverse_is_symmetric():
    a = np.array([[4.0, 2.0], [2.0, 5.0]])
    inv = spd_inverse(spd_factorize(a))
    assert_array_equal(inv, inv.T)
    assert_allclose(inv @ a, np.eye(2), atol=1e-14)


def test_rank_examples():
    assert rank(np.eye(4)) == 4
    e1, e2 = np.eye(3)[:, 0], np.eye(3)[:, 1]
    assert rank(np.column_stack([e1, e2, e1 + e2])) == 2
    assert rank(np.eye(4)[:, :3]) == 3
    assert rank(np.zeros((3, 2))) == 0
    with pytest.raises(ValueError):
        rank(np.eye(2), tol=0)


@pytest.mark.parametrize("full", [True, False])
def test_weighted_outer_sum_is_pd_iff_full_rank(full):
    # sum_i c_i a_i a_i^T with c_i > 0 is PD exactly when the a_i span R^p
    rng = np.random.default_rng(11)
    p, n = 4, 6
    a = rng.standard_normal((p, n))
    if not full:
        # the vectors all live in the first three coordinates
        a[-1] = 0.0
    c = rng.uniform(0.5, 2.0, n)
    m = (a * c) @ a.T
    m = 0.5 * (m + m.T)
    assert (rank(a) == p) is full
    if full:
        spd_factorize(m, jitter=False)
    else:
        with pytest.raises(NotPdError):
            spd_factorize(m, jitter=False)
