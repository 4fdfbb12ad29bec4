"""
行列・分布の入出力

- Matrix Market 座標形式（scipy.io）
- JSON: {"rows", "cols", "triplets": [[i, j, v], ...]}（1 始まり）
- 分布表: pandas DataFrame → CSV（ヘッダーに ξ とラベルの規約を明記）
"""

import json
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.io
import scipy.sparse as sps

from linalg_utils import as_sparse, prune
from los_errors import DimensionError, LosInputError

FORMATS = ("mm", "json", "csv")


def save_matrix_market(A, path, comment: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), as_sparse(A).tocoo(), comment=comment, field="real")
    # mmwrite は拡張子が無いと .mtx を付ける
    return path if path.suffix == ".mtx" else path.with_name(path.name + ".mtx")


def load_matrix_market(path) -> sps.csr_matrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"❌ 行列ファイルが見つかりません: {path}")
    return sps.csr_matrix(scipy.io.mmread(str(path)))


def matrix_to_json(A) -> dict:
    coo = as_sparse(A).tocoo()
    order = np.lexsort((coo.col, coo.row))
    triplets = [[int(coo.row[k]) + 1, int(coo.col[k]) + 1, float(coo.data[k])] for k in order]
    return {"rows": int(coo.shape[0]), "cols": int(coo.shape[1]), "triplets": triplets}


def matrix_from_json(data: dict) -> sps.csr_matrix:
    try:
        rows, cols = int(data["rows"]), int(data["cols"])
        triplets = data["triplets"]
    except (KeyError, TypeError, ValueError) as e:
        raise LosInputError(f"❌ JSON 行列の形式が不正です: {e}")
    if not triplets:
        return sps.csr_matrix((rows, cols))
    arr = np.asarray(triplets, dtype=float)
    i = arr[:, 0].astype(int) - 1
    j = arr[:, 1].astype(int) - 1
    if i.min() < 0 or j.min() < 0 or i.max() >= rows or j.max() >= cols:
        raise DimensionError(f"❌ JSON 行列の添字が {rows}×{cols} の範囲外です")
    return prune(sps.csr_matrix((arr[:, 2], (i, j)), shape=(rows, cols)))


def save_matrix_json(A, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(matrix_to_json(A), f)
    return path


def load_matrix_json(path) -> sps.csr_matrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"❌ 行列ファイルが見つかりません: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return matrix_from_json(json.load(f))


def load_matrix(path) -> sps.csr_matrix:
    """拡張子で形式を判定（.mtx / .json / .csv の密行列）"""
    path = Path(path)
    if path.suffix == ".json":
        return load_matrix_json(path)
    if path.suffix == ".csv":
        if not path.exists():
            raise FileNotFoundError(f"❌ 行列ファイルが見つかりません: {path}")
        return sps.csr_matrix(pd.read_csv(path, header=None).to_numpy(dtype=float))
    return load_matrix_market(path)


def save_matrix(A, path, fmt: str = "mm", comment: str = "") -> Path:
    if fmt == "json":
        return save_matrix_json(A, Path(path).with_suffix(".json"))
    if fmt == "csv":
        path = Path(path).with_suffix(".csv")
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(as_sparse(A).toarray()).to_csv(path, header=False, index=False)
        return path
    return save_matrix_market(A, Path(path).with_suffix(".mtx"), comment=comment)


def distribution_table(
    x: np.ndarray,
    describe: Callable[[int], str],
    index_name: str = "config_index_1based",
    description_name: str = "valuation",
    nonzero_only: bool = True,
    tol: float = 1e-15,
) -> pd.DataFrame:
    """分布ベクトルを (1 始まりの添字, 説明, 確率) の表にする"""
    x = np.asarray(x, dtype=float).ravel()
    idx = np.flatnonzero(np.abs(x) > tol) if nonzero_only else np.arange(x.shape[0])
    return pd.DataFrame({
        index_name: idx + 1,
        description_name: [describe(int(i) + 1) for i in idx],
        "probability": x[idx],
    })


def save_table(df: pd.DataFrame, path, float_format: str = "%.12g") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=float_format)
    return path


def matrix_table(M: np.ndarray, row_name: str = "step", column_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """λ 行列などの密行列を 1 始まりの行番号つきの表にする"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    columns: List[str] = list(column_names) if column_names else [f"block_{j + 1}" for j in range(M.shape[1])]
    df = pd.DataFrame(M, columns=columns)
    df.insert(0, row_name, np.arange(1, M.shape[0] + 1))
    return df
