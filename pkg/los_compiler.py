"""
LOS コンパイラ: プログラム → DTMC 生成行列 T(P)

状態空間は宣言順・ドメイン順の辞書式列挙 ξ（1 始まり）。
配置 (状態, ラベル) は 状態 ⊗ e_ℓ で、ラベル因子が最後のテンソル因子です。

    T(P) = Σ_{(ℓ,ℓ') plain}      ⟦B_ℓ⟧ ⊗ E(ℓ,ℓ')
         + Σ_{(ℓ,ℓ') underlined} ⟦B_ℓ⟧_ ⊗ E(ℓ,ℓ')
         + I ⊗ E(ℓ*,ℓ*)

choose の辺は p·I ⊗ E(ℓ, init(分岐)) を足します。
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps

import lang
from linalg_utils import (
    MAX_ENTRIES, PRUNE_TOL, identity, is_row_stochastic, kron, kron_all, matrix_unit, prune, row_sums,
)
from los_errors import DomainError, LosInputError, ProbabilityError, StateSpaceBlowupError


# =====================
# 状態空間
# =====================
@dataclass(frozen=True)
class StateSpace:
    variables: Tuple[str, ...]
    domains: Tuple[Tuple[int, ...], ...]

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(len(d) for d in self.domains)

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def var_index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise LosInputError(f"❌ 未宣言の変数: {name}")

    def index(self, valuation: Union[Mapping[str, int], Sequence[int]]) -> int:
        """ξ(valuation)、1 始まり"""
        if isinstance(valuation, Mapping):
            missing = [v for v in self.variables if v not in valuation]
            if missing:
                raise LosInputError(f"❌ 値の無い変数: {', '.join(missing)}")
            values = [valuation[v] for v in self.variables]
        else:
            values = list(valuation)
            if len(values) != len(self.variables):
                raise LosInputError(f"❌ 変数の数が一致しません: {len(values)} != {len(self.variables)}")
        idx = 0
        for name, domain, value in zip(self.variables, self.domains, values):
            if value not in domain:
                raise DomainError(f"❌ 値 {value} は {name} のドメイン {set(domain)} の外です")
            idx = idx * len(domain) + domain.index(value)
        return idx + 1

    def valuation(self, index: int) -> Dict[str, int]:
        if not 1 <= index <= self.size:
            raise LosInputError(f"❌ 状態番号 {index} は 1..{self.size} の範囲外です")
        rest = index - 1
        values = []
        for domain in reversed(self.domains):
            rest, pos = divmod(rest, len(domain))
            values.append(domain[pos])
        return dict(zip(self.variables, reversed(values)))

    def valuations(self) -> Iterator[Dict[str, int]]:
        for values in itertools.product(*self.domains):
            yield dict(zip(self.variables, values))

    def describe(self, index: int) -> str:
        return ",".join(f"{k}={v}" for k, v in self.valuation(index).items())


def enumerate_space(decls: Sequence[Tuple[str, Sequence[int]]]) -> StateSpace:
    if not decls:
        raise LosInputError("❌ 変数が 1 つも宣言されていません")
    for name, domain in decls:
        if len(domain) == 0:
            raise DomainError(f"❌ 変数 {name} のドメインが空です")
    return StateSpace(tuple(n for n, _ in decls), tuple(tuple(d) for _, d in decls))


def parse_valuation(text: str, space: StateSpace) -> Dict[str, int]:
    """'d=0,g=1,o=2' 形式の初期状態"""
    values: Dict[str, int] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise LosInputError(f"❌ 初期状態の形式が不正です: {item!r}（例: d=0,g=0）")
        name, value = (s.strip() for s in item.split("=", 1))
        space.var_index(name)
        try:
            values[name] = int(value)
        except ValueError:
            raise LosInputError(f"❌ 整数ではありません: {name}={value}")
    space.index(values)
    return values


# =====================
# ブロックの演算子
# =====================
def _update_factor(values: Sequence[int], c: int) -> sps.csr_matrix:
    """単一変数の U(c): c の列だけが 1"""
    n = len(values)
    col = values.index(c)
    return sps.csr_matrix((np.ones(n), (np.arange(n), np.full(n, col))), shape=(n, n))


def update_const(var_idx: int, c: int, space: StateSpace) -> sps.csr_matrix:
    """U(x_k←c) = I ⊗ … ⊗ U(c) ⊗ … ⊗ I"""
    domain = space.domains[var_idx]
    if c not in domain:
        raise DomainError(
            f"❌ 値 {c} は {space.variables[var_idx]} のドメイン {set(domain)} の外です"
        )
    factors = [identity(len(d)) for d in space.domains]
    factors[var_idx] = _update_factor(domain, c)
    return kron_all(factors)


def _evaluate(expr, space: StateSpace, evaluator) -> np.ndarray:
    return np.array([evaluator(expr, env) for env in space.valuations()])


def projection(bexpr: lang.BExpr, space: StateSpace) -> sps.csr_matrix:
    """P(b): b が成り立つ状態で 1 の対角行列"""
    holds = _evaluate(bexpr, space, lang.eval_bexpr).astype(float)
    return prune(sps.diags(holds, format="csr"))


def update_expr(var_idx: int, expr: lang.AExpr, space: StateSpace) -> sps.csr_matrix:
    """U(x_k←e) = Σ_c P(e=c) U(x_k←c)"""
    results = _evaluate(expr, space, lang.eval_aexpr)
    domain = space.domains[var_idx]
    offending = [i + 1 for i, v in enumerate(results) if v not in domain]
    if offending:
        shown = "; ".join(f"[{space.describe(i)}] → {results[i - 1]}" for i in offending[:5])
        more = f" ほか {len(offending) - 5} 状態" if len(offending) > 5 else ""
        raise DomainError(
            f"❌ {space.variables[var_idx]}:={lang.format_aexpr(expr)} がドメイン "
            f"{set(domain)} の外の値になります: {shown}{more}"
        )
    N = space.size
    T = sps.csr_matrix((N, N))
    for c in domain:
        mask = (results == c).astype(float)
        if mask.any():
            T = T + sps.diags(mask, format="csr") @ update_const(var_idx, c, space)
    return prune(T)


def random_update(var_idx: int, dist: lang.Distribution, space: StateSpace) -> sps.csr_matrix:
    """Σ_c ρ(c) U(x←c)"""
    N = space.size
    T = sps.csr_matrix((N, N))
    for value, p in dist.support:
        if p > 0:
            T = T + p * update_const(var_idx, value, space)
    return prune(T)


@dataclass(frozen=True)
class BlockSemantics:
    positive: sps.csr_matrix
    negative: sps.csr_matrix


def block_semantics(block, space: StateSpace) -> BlockSemantics:
    """
    ブロックの (⟦B⟧, 下線付き ⟦B⟧)

    テスト: (P(b=false), P(b=true))。それ以外の下線側は I。
    choose と仮想 stop は状態を変えないので (I, I)。
    """
    I = identity(space.size)
    if isinstance(block, lang.Assign):
        return BlockSemantics(update_expr(space.var_index(block.var), block.expr, space), I)
    if isinstance(block, lang.RandomAssign):
        return BlockSemantics(random_update(space.var_index(block.var), block.dist, space), I)
    if isinstance(block, (lang.If, lang.While)):
        holds = projection(block.cond, space)
        return BlockSemantics(prune(I - holds), holds)
    return BlockSemantics(I, I)


# =====================
# 組み立て
# =====================
@dataclass
class LosOperator:
    matrix: sps.csr_matrix
    space: StateSpace
    labels: Tuple[int, ...]
    stop_label: int
    init_label: int

    @property
    def label_count(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    @property
    def density(self) -> float:
        return self.nnz / float(self.dimension ** 2)

    def label_position(self, label: int) -> int:
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise LosInputError(f"❌ 存在しないラベル: {label}（ラベル: {list(self.labels)}）")

    def config_index(self, state_index: int, label: int) -> int:
        """(状態, ラベル) の配置番号 = (s−1)·L + pos(ℓ)、1 始まり"""
        return (state_index - 1) * self.label_count + self.label_position(label)

    def split_config(self, index: int) -> Tuple[int, int]:
        state, pos = divmod(index - 1, self.label_count)
        return state + 1, self.labels[pos]

    def describe_config(self, index: int) -> str:
        state, label = self.split_config(index)
        return f"{self.space.describe(state)}@{label}"


def operator_terms(
    program: lang.Program,
    space: Optional[StateSpace] = None,
    max_entries: int = MAX_ENTRIES,
) -> List[Tuple[lang.FlowEdge, sps.csr_matrix]]:
    """各フロー辺の寄与 ⟦B⟧ ⊗ E(ℓ,ℓ')（パラメータは束縛済みであること）"""
    space = space or enumerate_space(program.decls)
    labels = program.labels
    L = len(labels)
    position = {label: i + 1 for i, label in enumerate(labels)}
    blocks = lang.blocks(program)
    semantics: Dict[int, BlockSemantics] = {}
    I = identity(space.size)

    terms = []
    for edge in lang.sorted_flow(program):
        E = matrix_unit(position[edge.source], position[edge.target], L)
        block = blocks[edge.source]
        if isinstance(block, lang.Choose):
            p = lang.prob_value(edge.probability)
            terms.append((edge, p * kron(I, E, max_entries)))
            continue
        if edge.source not in semantics:
            semantics[edge.source] = block_semantics(block, space)
        sem = semantics[edge.source]
        state_op = sem.negative if edge.polarity == lang.UNDERLINED else sem.positive
        terms.append((edge, kron(state_op, E, max_entries)))
    return terms


def assemble(
    program: lang.Program,
    params: Optional[Mapping[str, float]] = None,
    strict: bool = True,
    max_entries: int = MAX_ENTRIES,
    stochastic_tol: float = 1e-12,
) -> LosOperator:
    """
    T(P) を組み立てる

    params が与えられれば #name を束縛してから組み立てます。
    strict=True のとき choose の正規化と行確率性を検査します。
    """
    if params is not None:
        program = lang.bind_parameters(program, params, check=strict)
    space = enumerate_space(program.decls)
    L = program.label_count
    dim = space.size * L
    if dim * dim > max_entries:
        raise StateSpaceBlowupError(
            f"❌ state-space blow-up: T(P) は {dim}×{dim} で上限 {max_entries} 成分を超えます"
        )

    T = sps.csr_matrix((dim, dim))
    for _, term in operator_terms(program, space, max_entries):
        T = T + term
    T = prune(T, PRUNE_TOL)

    if strict and not is_row_stochastic(T, stochastic_tol):
        worst = float(np.max(np.abs(row_sums(T) - 1.0)))
        raise ProbabilityError(f"❌ T(P) が行確率的ではありません（行和の最大誤差 {worst:.3g}）")
    return LosOperator(T, space, program.labels, program.stop_label, program.init_label)
