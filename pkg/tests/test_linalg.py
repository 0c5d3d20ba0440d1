import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from compprox.builders import fused_difference_operator
from compprox.errors import DimensionError, NonFiniteError
from compprox.linalg import (
    LinearOperator,
    apply,
    as_sparse,
    as_vector,
    lipschitz_square_loss,
    power_iteration_extremes,
    read_matrix,
    read_vector,
    svd_small,
    write_matrix,
    write_vector,
)


def test_apply_identity_zero_and_difference():
    assert np.array_equal(apply(LinearOperator.identity(2), [1, 2]), [1.0, 2.0])
    assert np.array_equal(apply(LinearOperator.zeros(2, 2), [5, 7]), [0.0, 0.0])
    assert np.array_equal(apply(fused_difference_operator(3), [3, 1, 4]), [2.0, -3.0])


def test_apply_rejects_wrong_length_and_nonfinite():
    with pytest.raises(DimensionError):
        apply(LinearOperator.identity(3), [1.0, 2.0])
    with pytest.raises(NonFiniteError):
        as_vector([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        as_sparse(np.array([[np.inf]]))


def test_as_sparse_sums_duplicates_and_sorts():
    M = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    S = as_sparse(M)
    assert S.has_canonical_format
    assert S[0, 1] == 3.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_adjoint_consistency(m, d, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((m, d)) * (r.uniform(size=(m, d)) < 0.6)
    B = LinearOperator.from_matrix(M)
    x, z = r.standard_normal(d), r.standard_normal(m)
    lhs, rhs = B.apply(x) @ z, x @ B.rapply(z)
    bound = 1e-12 * (1 + np.linalg.norm(x) * np.linalg.norm(z) * np.linalg.norm(M))
    assert abs(lhs - rhs) <= bound


def test_power_iteration_examples():
    s = power_iteration_extremes(LinearOperator.identity(3))
    assert s.lambda_max == pytest.approx(1, abs=1e-9) and s.lambda_min == pytest.approx(1, abs=1e-9)
    s = power_iteration_extremes(LinearOperator.from_matrix(np.diag([4.0, 1.0])))
    assert (s.lambda_max, s.lambda_min) == pytest.approx((4, 1), abs=1e-8)
    B = fused_difference_operator(3)
    s = power_iteration_extremes(B.gram())
    assert (s.lambda_max, s.lambda_min) == pytest.approx((3, 1), abs=1e-8)
    assert s.converged


def test_power_iteration_random_diagonals(rng):
    for _ in range(50):
        n = int(rng.integers(1, 12))
        diag = rng.uniform(0.1, 10, size=n)
        s = power_iteration_extremes(LinearOperator.from_matrix(np.diag(diag)), tol=1e-12, max_iter=200000)
        assert s.lambda_max == pytest.approx(diag.max(), rel=1e-6)
        assert s.lambda_min == pytest.approx(diag.min(), abs=1e-5 * diag.max())


def test_power_iteration_rank_deficient_and_empty():
    B = LinearOperator.from_matrix(np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [1.0, 0.0, -1.0]]))
    s = power_iteration_extremes(B.gram())
    assert s.lambda_min == 0.0
    assert s.lambda_max == pytest.approx(3.0, rel=1e-8)
    s = power_iteration_extremes(LinearOperator.zeros(0, 0))
    assert (s.lambda_max, s.lambda_min) == (0.0, 0.0)


def test_power_iteration_reproducible():
    M = np.random.default_rng(3).standard_normal((6, 6))
    G = LinearOperator.from_matrix(M @ M.T)
    assert power_iteration_extremes(G, seed=4) == power_iteration_extremes(G, seed=4)


def test_svd_small_examples():
    U, s, V = svd_small(np.diag([3.0, 2.0]))
    assert np.allclose(s, [3, 2])
    assert np.allclose(np.abs(U), np.eye(2)) and np.allclose(np.abs(V), np.eye(2))
    assert np.allclose(svd_small(np.zeros((2, 2)))[1], [0, 0])
    assert np.allclose(svd_small(np.array([[0.0, 1.0], [1.0, 0.0]]))[1], [1, 1])


def test_svd_small_reconstruction(rng):
    for _ in range(100):
        m, n = rng.integers(1, 21, size=2)
        X = rng.standard_normal((m, n))
        U, s, V = svd_small(X)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
        assert np.allclose((U * s) @ V.T, X, atol=1e-10)
        k = s.size
        assert np.allclose(U.T @ U, np.eye(k), atol=1e-10)
        assert np.allclose(V.T @ V, np.eye(k), atol=1e-10)


def test_lipschitz_examples():
    assert lipschitz_square_loss(LinearOperator.identity(3)) == (pytest.approx(1.0), True)
    assert lipschitz_square_loss(LinearOperator.from_matrix(2 * np.eye(2)))[0] == pytest.approx(4.0)
    L, exact = lipschitz_square_loss(LinearOperator.from_matrix(np.array([[1.0, 1.0], [0.0, 1.0]])))
    assert exact and L == pytest.approx((3 + np.sqrt(5)) / 2, rel=1e-12)


def test_lipschitz_frobenius_fallback():
    A = LinearOperator.from_matrix(np.array([[1.0, 1.0], [0.0, 1.0]]))
    L, exact = lipschitz_square_loss(A, max_dense=1)
    assert not exact and L == pytest.approx(3.0)


def test_matrix_market_round_trip(tmp_path, rng):
    M = sp.random(5, 7, density=0.4, random_state=1, format="csr")
    write_matrix(tmp_path / "m.mtx", M)
    R = read_matrix(tmp_path / "m.mtx")
    assert R.shape == (5, 7)
    assert np.array_equal(R.toarray(), M.toarray())
    x = rng.standard_normal(9)
    write_vector(tmp_path / "x.txt", x)
    assert np.array_equal(read_vector(tmp_path / "x.txt"), x)
