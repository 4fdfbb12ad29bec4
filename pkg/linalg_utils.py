"""
疎行列ユーティリティ

LOS 演算子はすべて scipy.sparse の CSR 行列、分布は numpy の 1 次元配列（行ベクトル）。
インデックスは API では 1 始まり（状態列挙表と合わせるため）、内部では 0 始まりです。
"""

from typing import Iterable, Sequence, Union

import numpy as np
import scipy.sparse as sps

from los_errors import DimensionError, RankDeficientError, StateSpaceBlowupError

PRUNE_TOL = 1e-15
MAX_ENTRIES = 10_000_000

Matrix = Union[sps.spmatrix, np.ndarray]


def as_sparse(A: Matrix) -> sps.csr_matrix:
    if sps.issparse(A):
        return sps.csr_matrix(A)
    return sps.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)))


def prune(A: Matrix, tol: float = PRUNE_TOL) -> sps.csr_matrix:
    """絶対値が tol 以下の成分を取り除く"""
    A = as_sparse(A).copy()
    A.data[np.abs(A.data) <= tol] = 0.0
    A.eliminate_zeros()
    return A


def kron(A: Matrix, B: Matrix, max_entries: int = MAX_ENTRIES) -> sps.csr_matrix:
    """
    クロネッカー積 A ⊗ B

    成分 ((i−1)k+r, (j−1)l+s) = A_ij · B_rs。潜在的な成分数（行×列）が
    max_entries を超える場合は状態空間の爆発として拒否します。
    """
    A = as_sparse(A)
    B = as_sparse(B)
    rows = A.shape[0] * B.shape[0]
    cols = A.shape[1] * B.shape[1]
    if rows * cols > max_entries:
        raise StateSpaceBlowupError(
            f"❌ state-space blow-up: {rows}×{cols} は上限 {max_entries} 成分を超えます"
        )
    return prune(sps.kron(A, B, format="csr"))


def kron_all(factors: Sequence[Matrix], max_entries: int = MAX_ENTRIES) -> sps.csr_matrix:
    if not factors:
        return identity(1)
    result = as_sparse(factors[0])
    for factor in factors[1:]:
        result = kron(result, factor, max_entries)
    return result


def identity(n: int) -> sps.csr_matrix:
    return sps.identity(n, dtype=float, format="csr")


def matrix_unit(i: int, j: int, n: int) -> sps.csr_matrix:
    """成分 (i,j) だけが 1 の n×n 行列（1 始まり）"""
    if not (1 <= i <= n and 1 <= j <= n):
        raise DimensionError(f"❌ 行列単位 E({i},{j}) は {n}×{n} の範囲外です")
    return sps.csr_matrix(([1.0], ([i - 1], [j - 1])), shape=(n, n))


def unit_vector(i: int, n: int) -> np.ndarray:
    if not 1 <= i <= n:
        raise DimensionError(f"❌ 単位ベクトル e_{i} は次元 {n} の範囲外です")
    e = np.zeros(n)
    e[i - 1] = 1.0
    return e


def vec_mat_mul(x: np.ndarray, A: Matrix) -> np.ndarray:
    """行ベクトル × 行列（後ろから掛ける x·T）"""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != A.shape[0]:
        raise DimensionError(f"❌ 次元不一致: ベクトル {x.shape[0]} と行列 {A.shape[0]}×{A.shape[1]}")
    return np.asarray(as_sparse(A).T @ x).ravel()


def pseudo_inverse(A: Matrix) -> sps.csr_matrix:
    """
    列フルランク行列の Moore-Penrose 擬似逆行列

    A† = (AᵀA)⁻¹Aᵀ。AᵀA は列数の大きさしかないので密に解きます。
    """
    A = as_sparse(A)
    gram = (A.T @ A).toarray()
    if np.linalg.matrix_rank(gram) < A.shape[1]:
        raise RankDeficientError("❌ abstraction not full column rank")
    dense = np.linalg.solve(gram, A.T.toarray())
    return prune(sps.csr_matrix(dense))


def normalized_transpose(A: Matrix) -> sps.csr_matrix:
    """0/1 分類行列の擬似逆行列: 各行を和で割った転置"""
    At = as_sparse(A).T.tocsr().astype(float)
    sums = np.asarray(At.sum(axis=1)).ravel()
    if np.any(sums == 0):
        raise RankDeficientError("❌ abstraction not full column rank")
    return sps.diags(1.0 / sums) @ At


def frobenius(A: Matrix) -> float:
    if sps.issparse(A):
        return float(np.sqrt((A.multiply(A)).sum()))
    return float(np.linalg.norm(np.asarray(A, dtype=float)))


def l1(A: Union[Matrix, Iterable[float]]) -> float:
    if sps.issparse(A):
        return float(np.abs(A.data).sum())
    return float(np.abs(np.asarray(A, dtype=float)).sum())


def spectral_norm(A: Matrix) -> float:
    dense = A.toarray() if sps.issparse(A) else np.asarray(A, dtype=float)
    return float(np.linalg.norm(dense, 2))


def operator_norm(A: Matrix, kind: str = "frobenius") -> float:
    if kind == "spectral":
        return spectral_norm(A)
    return frobenius(A)


def row_sums(A: Matrix) -> np.ndarray:
    return np.asarray(as_sparse(A).sum(axis=1)).ravel()


def is_row_stochastic(A: Matrix, tol: float = 1e-12) -> bool:
    A = as_sparse(A)
    if A.nnz and A.data.min() < -tol:
        return False
    return bool(np.all(np.abs(row_sums(A) - 1.0) <= tol))


def is_distribution(x: np.ndarray, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)
