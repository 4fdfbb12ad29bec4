"""疎行列ユーティリティと行列入出力のテスト"""

import numpy as np
import pytest
import scipy.sparse as sps

from linalg_utils import (
    frobenius, identity, is_row_stochastic, kron, kron_all, l1, matrix_unit, normalized_transpose,
    operator_norm, prune, pseudo_inverse, spectral_norm, unit_vector, vec_mat_mul,
)
from los_errors import DimensionError, RankDeficientError, StateSpaceBlowupError
from matrix_io import (
    distribution_table, load_matrix, matrix_from_json, matrix_table, matrix_to_json, save_matrix,
)
from pai_analysis import classification, forgetful

A_W = np.array([
    [1, 0], [0, 1], [0, 1],
    [0, 1], [1, 0], [0, 1],
    [0, 1], [0, 1], [1, 0],
], dtype=float)


def dense(A):
    return A.toarray() if sps.issparse(A) else np.asarray(A)


def random_classification(rng, max_dim=12):
    n = int(rng.integers(1, max_dim + 1))
    k = int(rng.integers(1, n + 1))
    # 各クラスに少なくとも 1 行、残りはランダムに割り当て
    owner = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
    rng.shuffle(owner)
    return classification(n, [list(np.flatnonzero(owner == j)) for j in range(k)])


def assert_penrose(A, Ad, tol=1e-10):
    A, Ad = dense(A), dense(Ad)
    assert np.allclose(A @ Ad @ A, A, atol=tol, rtol=0)
    assert np.allclose(Ad @ A @ Ad, Ad, atol=tol, rtol=0)
    assert np.allclose((A @ Ad).T, A @ Ad, atol=tol, rtol=0)
    assert np.allclose((Ad @ A).T, Ad @ A, atol=tol, rtol=0)


# =====================
# kron / matrix_unit
# =====================
def test_kron_identity():
    assert np.array_equal(dense(kron(identity(2), identity(2))), np.eye(4))


def test_kron_basis_vectors():
    assert np.array_equal(dense(kron([[1, 0]], [[0, 1]])), [[0, 1, 0, 0]])


def test_kron_entry_layout():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[0.0, 5.0], [6.0, 7.0]])
    K = dense(kron(A, B))
    # ((i−1)k+r, (j−1)l+s) = A_ij·B_rs（1 始まり）
    assert K[(2 - 1) * 2 + 2 - 1, (1 - 1) * 2 + 1 - 1] == A[1, 0] * B[1, 0]
    assert np.array_equal(K, np.kron(A, B))


def test_kron_abstraction_dimensions():
    K = kron_all([A_W, forgetful(3), forgetful(11)])
    assert K.shape == (297, 2)


def test_kron_blowup():
    with pytest.raises(StateSpaceBlowupError, match="state-space blow-up"):
        kron(identity(100), identity(100), max_entries=10_000)


def test_kron_mixed_product_and_associativity():
    rng = np.random.default_rng(0)
    A, B = rng.random((2, 3)), rng.random((4, 2))
    C, D = rng.random((3, 2)), rng.random((2, 3))
    lhs = dense(kron(A, B)) @ dense(kron(C, D))
    assert np.allclose(lhs, dense(kron(A @ C, B @ D)), atol=1e-12, rtol=0)
    E = rng.random((2, 2))
    assert np.allclose(dense(kron(kron(A, B), E)), dense(kron(A, kron(B, E))), atol=1e-12, rtol=0)


def test_matrix_unit():
    assert np.array_equal(dense(matrix_unit(1, 2, 2)), [[0, 1], [0, 0]])
    E = dense(matrix_unit(6, 6, 6))
    assert E[5, 5] == 1 and E.sum() == 1


def test_matrix_unit_out_of_range():
    with pytest.raises(DimensionError):
        matrix_unit(3, 1, 2)


def test_prune_drops_tiny_entries():
    A = prune(np.array([[1.0, 1e-16], [0.0, -2.0]]))
    assert A.nnz == 2


# =====================
# 擬似逆行列
# =====================
def test_pseudo_inverse_of_forgetful():
    assert np.allclose(dense(pseudo_inverse(forgetful(3))), [[1 / 3, 1 / 3, 1 / 3]])


def test_pseudo_inverse_of_identity():
    assert np.allclose(dense(pseudo_inverse(identity(4))), np.eye(4))


def test_pseudo_inverse_of_monty_win_abstraction():
    Ad = pseudo_inverse(A_W)
    assert Ad.shape == (2, 9)
    assert np.allclose(A_W @ dense(Ad) @ A_W, A_W)
    assert np.allclose(dense(Ad), dense(normalized_transpose(A_W)))


def test_pseudo_inverse_rank_deficient():
    with pytest.raises(RankDeficientError, match="not full column rank"):
        pseudo_inverse(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_penrose_and_tensor_factorization_suite():
    rng = np.random.default_rng(12345)
    for _ in range(200):
        A = random_classification(rng)
        B = random_classification(rng)
        Ad, Bd = pseudo_inverse(A), pseudo_inverse(B)
        assert_penrose(A, Ad)
        assert np.allclose(dense(Ad), dense(normalized_transpose(A)), atol=1e-10, rtol=0)
        K = kron(A, B)
        assert np.allclose(dense(pseudo_inverse(K)), dense(kron(Ad, Bd)), atol=1e-10, rtol=0)


# =====================
# ノルム・ベクトル
# =====================
def test_norms():
    assert frobenius(identity(2)) == pytest.approx(np.sqrt(2))
    assert l1([0.2, -0.3, 0.5]) == pytest.approx(1.0)
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert frobenius(S - S) == 0.0
    assert spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    assert operator_norm(np.diag([3.0, -4.0]), "spectral") == pytest.approx(4.0)
    assert operator_norm(np.diag([3.0, -4.0])) == pytest.approx(5.0)


def test_vec_mat_mul():
    assert np.array_equal(vec_mat_mul(unit_vector(1, 2), matrix_unit(1, 2, 2)), unit_vector(2, 2))
    # 一様分布に U(1) を掛けると点分布
    U1 = np.array([[0.0, 1.0, 0.0]] * 3)
    assert np.allclose(vec_mat_mul(np.full(3, 1 / 3), U1), [0.0, 1.0, 0.0])


def test_vec_mat_mul_dimension_mismatch():
    with pytest.raises(DimensionError):
        vec_mat_mul(np.ones(3), identity(2))


def test_unit_vector_out_of_range():
    with pytest.raises(DimensionError):
        unit_vector(0, 3)


def test_is_row_stochastic():
    assert is_row_stochastic(identity(3))
    assert not is_row_stochastic(np.array([[0.5, 0.4], [0.0, 1.0]]))
    assert not is_row_stochastic(np.array([[1.5, -0.5], [0.0, 1.0]]))


# =====================
# 行列入出力
# =====================
def test_matrix_json_is_one_based():
    data = matrix_to_json(matrix_unit(1, 2, 2))
    assert data == {"rows": 2, "cols": 2, "triplets": [[1, 2, 1.0]]}
    assert np.array_equal(dense(matrix_from_json(data)), [[0, 1], [0, 0]])


@pytest.mark.parametrize("fmt, suffix", [("mm", ".mtx"), ("json", ".json"), ("csv", ".csv")])
def test_save_and_load_matrix(tmp_path, fmt, suffix):
    A = sps.csr_matrix(np.array([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.25, 0.0, 0.75]]))
    path = save_matrix(A, tmp_path / "T", fmt)
    assert path.suffix == suffix
    assert np.allclose(dense(load_matrix(path)), dense(A))


def test_load_missing_matrix(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_matrix(tmp_path / "missing.mtx")


def test_distribution_table():
    df = distribution_table(np.array([0.0, 0.25, 0.0, 0.75]), lambda i: f"s{i}")
    assert list(df.columns) == ["config_index_1based", "valuation", "probability"]
    assert df["config_index_1based"].tolist() == [2, 4]
    assert df["valuation"].tolist() == ["s2", "s4"]


def test_matrix_table():
    df = matrix_table(np.eye(2))
    assert list(df.columns) == ["step", "block_1", "block_2"]
    assert df["step"].tolist() == [1, 2]
