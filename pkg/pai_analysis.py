"""
LOS 演算子の解析と確率的抽象解釈（PAI）

- iterate: x·Tⁿ のべき乗反復（l1 残差で収束判定）
- extract_label: ラベル ℓ にある部分分布の取り出し
- Abstraction: 変数ごと（または連続する変数の組ごと）の因子のテンソル積 A と A†
- abstract_state / abstract_operator: x·A と A†·T·A

抽象化の指定（CLI の --abstraction）:
    "d,g=classes:[d==g, d!=g]; o=forget; label=forget"
    "x=id; z=forget"
    "label=classes:[{6}, {1,2,3,4,5}]"
指定の無い変数は id。全体を "id" とすると恒等抽象化です。
"""

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps

import lang
from linalg_utils import (
    as_sparse, identity, is_distribution, kron_all, l1, pseudo_inverse, unit_vector, vec_mat_mul,
)
from los_compiler import LosOperator, StateSpace
from los_errors import ConvergenceError, DimensionError, LosInputError, RankDeficientError

LABEL = "label"


# =====================
# 抽象化
# =====================
@dataclass
class AbstractionFactor:
    group: Tuple[str, ...]
    matrix: sps.csr_matrix
    column_names: Tuple[str, ...]
    kind: str = "id"


def identity_factor(n: int) -> sps.csr_matrix:
    return identity(n)


def forgetful(n: int) -> sps.csr_matrix:
    """n×1 の全 1 列。A† は 1/n の行"""
    if n < 1:
        raise LosInputError(f"❌ forgetful 抽象化の次元が不正です: {n}")
    return sps.csr_matrix(np.ones((n, 1)))


def classification(n: int, classes: Sequence[Sequence[int]]) -> sps.csr_matrix:
    """
    0/1 分類行列（行 = 具体値、列 = クラス）

    classes は 0 始まりの行番号の集合の列。どのクラスにも入らない行は
    抽象化で質量を失うので警告します。
    """
    M = np.zeros((n, len(classes)))
    for j, rows in enumerate(classes):
        if len(rows) == 0:
            raise RankDeficientError(f"❌ abstraction not full column rank: クラス {j + 1} が空です")
        for i in rows:
            if not 0 <= i < n:
                raise DimensionError(f"❌ クラス {j + 1} の行 {i + 1} は 1..{n} の範囲外です")
            if M[i].any():
                raise LosInputError(f"❌ 行 {i + 1} が複数のクラスに属しています")
            M[i, j] = 1.0
    uncovered = int((M.sum(axis=1) == 0).sum())
    if uncovered:
        print(f"⚠️  分類抽象化: {uncovered} 行がどのクラスにも属していません")
    return sps.csr_matrix(M)


@dataclass
class Abstraction:
    """
    A = ⊗ A_i とその擬似逆行列 A† = ⊗ A_i†

    各因子は列フルランクでなければなりません（構築時に検査）。
    """
    factors: List[AbstractionFactor]
    _matrix: Optional[sps.csr_matrix] = field(default=None, init=False, repr=False)
    _pinv: Optional[sps.csr_matrix] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self._factor_pinvs = [pseudo_inverse(f.matrix) for f in self.factors]

    @property
    def matrix(self) -> sps.csr_matrix:
        if self._matrix is None:
            self._matrix = kron_all([f.matrix for f in self.factors])
        return self._matrix

    @property
    def pinv(self) -> sps.csr_matrix:
        if self._pinv is None:
            self._pinv = kron_all(self._factor_pinvs)
        return self._pinv

    @property
    def shape(self) -> Tuple[int, int]:
        rows = int(np.prod([f.matrix.shape[0] for f in self.factors]))
        cols = int(np.prod([f.matrix.shape[1] for f in self.factors]))
        return rows, cols

    def describe_columns(self) -> List[str]:
        names = [f.column_names for f in self.factors]
        return [" ".join(parts) for parts in itertools.product(*names)]

    @classmethod
    def from_matrices(cls, matrices: Sequence, names: Optional[Sequence[str]] = None) -> "Abstraction":
        factors = []
        for k, M in enumerate(matrices):
            M = as_sparse(M)
            group = (names[k],) if names else (f"f{k + 1}",)
            cols = tuple(f"{group[0]}#{j + 1}" for j in range(M.shape[1]))
            factors.append(AbstractionFactor(group, M, cols, "matrix"))
        return cls(factors)


def _split_items(text: str) -> List[str]:
    """深さ 0 のカンマで分割"""
    items, depth, current = [], 0, ""
    for ch in text:
        if ch in "({[":
            depth += 1
        elif ch in ")}]":
            depth -= 1
        if ch == "," and depth == 0:
            items.append(current.strip())
            current = ""
        else:
            current += ch
    if current.strip():
        items.append(current.strip())
    return items


def _group_factor(group: Tuple[str, ...], kind: str, space: StateSpace,
                  labels: Optional[Sequence[int]]) -> AbstractionFactor:
    if group == (LABEL,):
        rows = [(l,) for l in labels]
        row_names = [f"@{l}" for l in labels]
        decls = None
    else:
        domains = [space.domains[space.var_index(v)] for v in group]
        rows = list(itertools.product(*domains))
        row_names = [",".join(f"{v}={x}" for v, x in zip(group, r)) for r in rows]
        decls = [(v, space.domains[space.var_index(v)]) for v in group]
    n = len(rows)

    if kind == "id":
        return AbstractionFactor(group, identity_factor(n), tuple(row_names), "id")
    if kind == "forget":
        return AbstractionFactor(group, forgetful(n), ("*",), "forget")
    if not (kind.startswith("classes:[") and kind.endswith("]")):
        raise LosInputError(f"❌ 抽象化の種類は id / forget / classes:[...] のいずれか: {kind!r}")

    classes, names = [], []
    for item in _split_items(kind[len("classes:["):-1]):
        if item.startswith("{"):
            values = [int(v) for v in _split_items(item.strip("{}"))]
            if len(group) != 1:
                raise LosInputError(f"❌ 値集合 {item} は単一の変数かラベルにのみ使えます")
            missing = [v for v in values if (v,) not in rows]
            if missing:
                raise LosInputError(f"❌ {group[0]} に存在しない値: {missing}")
            classes.append([rows.index((v,)) for v in values])
        else:
            if decls is None:
                raise LosInputError("❌ ラベルのクラスは値集合 {…} で指定してください")
            expr = lang.parse_bexpr(item, decls)
            classes.append([i for i, r in enumerate(rows) if lang.eval_bexpr(expr, dict(zip(group, r)))])
        names.append(item)
    return AbstractionFactor(group, classification(n, classes), tuple(names), "classes")


def parse_abstraction_spec(text: str, space: StateSpace,
                           labels: Optional[Sequence[int]] = None) -> Abstraction:
    """
    抽象化指定の文字列から Abstraction を作る

    labels が与えられればラベル因子を最後に付けます（省略時は id）。
    グループは宣言順に連続する変数でなければなりません。
    """
    text = (text or "").strip()
    specs = {}
    if text and text != "id":
        for part in filter(None, (p.strip() for p in text.split(";"))):
            group_text, sep, kind = part.partition("=")
            if not sep:
                raise LosInputError(f"❌ 抽象化指定の形式が不正です: {part!r}（例: o=forget）")
            group = tuple(g.strip() for g in group_text.split(","))
            if group in specs:
                raise LosInputError(f"❌ 抽象化指定が重複しています: {group_text}")
            if group != (LABEL,):
                idx = [space.var_index(v) for v in group]
                if idx != list(range(idx[0], idx[0] + len(idx))):
                    raise LosInputError(f"❌ グループ {group_text} は宣言順に連続する変数である必要があります")
            elif labels is None:
                raise LosInputError("❌ この抽象化にはラベル因子がありません")
            specs[group] = kind.strip()

    var_groups = [g for g in specs if g != (LABEL,)]
    grouped = [v for g in var_groups for v in g]
    duplicated = sorted({v for v in grouped if grouped.count(v) > 1})
    if duplicated:
        raise LosInputError(f"❌ 変数 {', '.join(duplicated)} が複数のグループに含まれています")

    factors: List[AbstractionFactor] = []
    starts = {g[0]: g for g in var_groups}
    covered = set()
    for var in space.variables:
        if var in covered:
            continue
        group = starts.get(var, (var,))
        factors.append(_group_factor(group, specs.get(group, "id"), space, labels))
        covered.update(group)
    if labels is not None:
        factors.append(_group_factor((LABEL,), specs.get((LABEL,), "id"), space, labels))
    return Abstraction(factors)


def _matrices(A: Union[Abstraction, sps.spmatrix, np.ndarray]):
    if isinstance(A, Abstraction):
        return A.matrix, A.pinv
    A = as_sparse(A)
    return A, pseudo_inverse(A)


# =====================
# 反復・取り出し
# =====================
@dataclass
class AnalysisResult:
    terminal: np.ndarray
    steps: int
    residual: float


def _matrix_of(T) -> sps.csr_matrix:
    return T.matrix if isinstance(T, LosOperator) else as_sparse(T)


def iterate(T, x0: np.ndarray, eps: float = 1e-12, max_steps: int = 1_000_000) -> AnalysisResult:
    """
    x·T を ‖x·T − x‖₁ < eps まで繰り返す

    極限行列 Tⁿ は作らず、ベクトル×行列だけを使います。
    """
    M = _matrix_of(T)
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape[0] != M.shape[0]:
        raise DimensionError(f"❌ 次元不一致: x0 は {x.shape[0]}、T は {M.shape[0]}×{M.shape[1]}")
    if not is_distribution(x):
        raise LosInputError("❌ x0 が確率分布ではありません（非負・合計 1）")
    Mt = M.T.tocsr()
    residual = float("inf")
    for step in range(max_steps + 1):
        y = Mt @ x
        residual = l1(y - x)
        if residual < eps:
            return AnalysisResult(x, step, residual)
        x = y
    raise ConvergenceError(
        f"❌ {max_steps} ステップで収束しませんでした（残差 {residual:.3g}）。"
        "プログラムがほとんど確実に停止しない可能性があります"
    )


def initial_config(space: StateSpace, s0, program) -> np.ndarray:
    """
    s0 ⊗ e_{init(P)}

    s0 は状態上の分布ベクトル、変数の値の辞書、または 1 始まりの状態番号。
    program は lang.Program または LosOperator（labels と init_label を持つもの）。
    """
    N = space.size
    if isinstance(s0, dict):
        s0 = unit_vector(space.index(s0), N)
    elif isinstance(s0, (int, np.integer)):
        s0 = unit_vector(int(s0), N)
    s0 = np.asarray(s0, dtype=float).ravel()
    if s0.shape[0] != N:
        raise DimensionError(f"❌ 次元不一致: s0 は {s0.shape[0]}、状態空間は {N}")
    if not is_distribution(s0):
        raise LosInputError("❌ s0 が確率分布ではありません")
    labels = list(program.labels)
    e = unit_vector(labels.index(program.init_label) + 1, len(labels))
    return np.kron(s0, e)


def extract_label(x: np.ndarray, label_position: int, label_count: int,
                  renormalize: bool = False) -> np.ndarray:
    """ラベル位置 ℓ（1 始まり）にある部分分布（既定では正規化しない）"""
    x = np.asarray(x, dtype=float).ravel()
    if label_count < 1 or x.shape[0] % label_count:
        raise DimensionError(f"❌ 次元 {x.shape[0]} はラベル数 {label_count} で割り切れません")
    if not 1 <= label_position <= label_count:
        raise LosInputError(f"❌ ラベル位置 {label_position} は 1..{label_count} の範囲外です")
    part = x.reshape(-1, label_count)[:, label_position - 1].copy()
    if renormalize:
        total = part.sum()
        if total <= 0:
            raise LosInputError(f"❌ ラベル位置 {label_position} に質量がありません")
        part /= total
    return part


def abstract_state(x: np.ndarray, A) -> np.ndarray:
    """x·A"""
    if isinstance(A, Abstraction):
        rows = A.shape[0]
        if np.asarray(x).ravel().shape[0] != rows:
            raise DimensionError(f"❌ 次元不一致: x は {np.asarray(x).size} 成分、A は {rows} 行です")
        M = A.matrix
    else:
        M = as_sparse(A)
    return vec_mat_mul(x, M)


def abstract_operator(T, A) -> sps.csr_matrix:
    """T# = A†·T·A"""
    M = _matrix_of(T)
    Am, Ad = _matrices(A)
    if Am.shape[0] != M.shape[0] or M.shape[0] != M.shape[1]:
        raise DimensionError(f"❌ 次元不一致: A は {Am.shape[0]}×{Am.shape[1]}、T は {M.shape[0]}×{M.shape[1]}")
    return sps.csr_matrix(Ad @ M @ Am)


def termination_profile(T, x0: np.ndarray, stop_position: int, steps: int) -> np.ndarray:
    """n = 0..steps について ℓ* にある質量（停止するプログラムでは単調非減少）"""
    M = _matrix_of(T)
    L = T.label_count if isinstance(T, LosOperator) else None
    if L is None:
        raise LosInputError("❌ termination_profile には LosOperator が必要です")
    Mt = M.T.tocsr()
    x = np.asarray(x0, dtype=float).ravel()
    profile = [extract_label(x, stop_position, L).sum()]
    for _ in range(steps):
        x = Mt @ x
        profile.append(extract_label(x, stop_position, L).sum())
    return np.array(profile)
