"""
モンテカルロ操作的インタプリタ

LOS 行列とは独立に AST から制御表を作り、1 実行ずつサンプリングします。
T(P) の検証用オラクルです。

乱数:
- 実行 r の乱数列は numpy の PCG64（64 ビット）を SeedSequence([seed, r]) で初期化
- 実行はチャンクに分けて joblib で並列化し、実行番号順に集計するので
  n_jobs によらず同じ seed なら同じ結果になります
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import lang
from linalg_utils import l1
from los_compiler import StateSpace, enumerate_space
from los_errors import DomainError, LosInputError, SimulationTimeout, UnboundParameterError

Valuation = Tuple[int, ...]


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    max_steps: int = 10_000
    runs: int = 100_000
    n_jobs: int = 1
    chunk_size: int = 5000

    def __post_init__(self):
        if self.runs < 1:
            raise LosInputError(f"❌ 実行回数は 1 以上: {self.runs}")
        if self.max_steps < 1:
            raise LosInputError(f"❌ max_steps は 1 以上: {self.max_steps}")


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, run_index])))


class Machine:
    """
    ラベル → (ブロック, 後続) の制御表と、1 ステップの遷移核

    遷移核は (ラベル, 値) ごとにキャッシュします（状態空間は有限）。
    """

    def __init__(self, program: lang.Program, params: Optional[Mapping[str, float]] = None):
        if params is not None:
            program = lang.bind_parameters(program, params)
        elif lang.parameters(program):
            names = ", ".join("#" + p for p in lang.parameters(program))
            raise UnboundParameterError(f"❌ 値が束縛されていないパラメータがあります: {names}")
        self.program = program
        self.variables = program.variables
        self.domains = program.domains
        self.table: Dict[int, Tuple[object, object]] = {}
        self._wire(program.body, program.stop_label)
        self._cache: Dict[Tuple[int, Valuation], Tuple[List[Tuple[int, Valuation]], np.ndarray]] = {}

    def _wire(self, stmt: lang.Stmt, cont: int) -> None:
        if isinstance(stmt, lang.Seq):
            self._wire(stmt.second, cont)
            self._wire(stmt.first, lang.init(stmt.second))
        elif isinstance(stmt, lang.Choose):
            self.table[stmt.label] = (stmt, [lang.init(b) for _, b in stmt.branches])
            for _, branch in stmt.branches:
                self._wire(branch, cont)
        elif isinstance(stmt, lang.If):
            self.table[stmt.label] = (stmt, (lang.init(stmt.then_branch), lang.init(stmt.else_branch)))
            self._wire(stmt.then_branch, cont)
            self._wire(stmt.else_branch, cont)
        elif isinstance(stmt, lang.While):
            self.table[stmt.label] = (stmt, (lang.init(stmt.body), cont))
            self._wire(stmt.body, stmt.label)
        else:
            self.table[stmt.label] = (stmt, cont)

    def _with(self, val: Valuation, var: str, value: int) -> Valuation:
        if value not in self.domains[var]:
            raise DomainError(f"❌ 実行時に {var}={value} がドメイン {set(self.domains[var])} の外になりました")
        k = self.variables.index(var)
        return val[:k] + (value,) + val[k + 1:]

    def kernel(self, label: int, val: Valuation) -> List[Tuple[int, Valuation, float]]:
        """(ラベル, 値) から 1 ステップ後の厳密な分布"""
        if label == self.program.stop_label:
            return [(label, val, 1.0)]
        stmt, succ = self.table[label]
        env = dict(zip(self.variables, val))
        if isinstance(stmt, lang.Skip):
            return [(succ, val, 1.0)]
        if isinstance(stmt, lang.Assign):
            return [(succ, self._with(val, stmt.var, lang.eval_aexpr(stmt.expr, env)), 1.0)]
        if isinstance(stmt, lang.RandomAssign):
            return [(succ, self._with(val, stmt.var, v), p) for v, p in stmt.dist.support if p > 0]
        if isinstance(stmt, lang.Choose):
            out = []
            for (prob, _), target in zip(stmt.branches, succ):
                p = lang.prob_value(prob)
                if p > 0:
                    out.append((target, val, p))
            return out
        # if / while: 真なら最初の後続
        taken = succ[0] if lang.eval_bexpr(stmt.cond, env) else succ[1]
        return [(taken, val, 1.0)]

    def _cached(self, label: int, val: Valuation):
        key = (label, val)
        if key not in self._cache:
            outcomes = self.kernel(label, val)
            targets = [(l, v) for l, v, _ in outcomes]
            cumulative = np.cumsum([p for _, _, p in outcomes])
            self._cache[key] = (targets, cumulative)
        return self._cache[key]

    def run(self, val: Valuation, rng: np.random.Generator, max_steps: int) -> Valuation:
        label = self.program.init_label
        stop = self.program.stop_label
        steps = 0
        while label != stop:
            if steps >= max_steps:
                raise SimulationTimeout(f"❌ {max_steps} ステップ以内に停止しませんでした", steps)
            targets, cumulative = self._cached(label, val)
            if len(targets) == 1:
                label, val = targets[0]
            else:
                u = rng.random() * cumulative[-1]
                k = min(int(np.searchsorted(cumulative, u, side="right")), len(targets) - 1)
                label, val = targets[k]
            steps += 1
        return val


def _as_valuation(program: lang.Program, space: StateSpace, s0) -> Valuation:
    if isinstance(s0, (int, np.integer)):
        s0 = space.valuation(int(s0))
    space.index(s0)
    return tuple(s0[v] for v in program.variables)


def transition_kernel(program: lang.Program, label: int, valuation: Mapping[str, int],
                      params: Optional[Mapping[str, float]] = None) -> List[Tuple[int, Dict[str, int], float]]:
    machine = Machine(program, params)
    val = tuple(valuation[v] for v in program.variables)
    return [(l, dict(zip(program.variables, v)), p) for l, v, p in machine.kernel(label, val)]


def run_once(program: lang.Program, s0, seed: int = 0, max_steps: int = 10_000,
             run_index: int = 0, params: Optional[Mapping[str, float]] = None) -> Dict[str, int]:
    """1 回実行して ℓ* に到達したときの値を返す（到達しなければ SimulationTimeout）"""
    space = enumerate_space(program.decls)
    machine = Machine(program, params)
    val = machine.run(_as_valuation(program, space, s0), run_rng(seed, run_index), max_steps)
    return dict(zip(program.variables, val))


def _run_chunk(program: lang.Program, params, val0: Valuation, seed: int,
               start: int, stop: int, max_steps: int) -> Tuple[np.ndarray, int]:
    space = enumerate_space(program.decls)
    machine = Machine(program, params)
    counts = np.zeros(space.size, dtype=np.int64)
    censored = 0
    for r in range(start, stop):
        try:
            val = machine.run(val0, run_rng(seed, r), max_steps)
        except SimulationTimeout:
            censored += 1
            continue
        counts[space.index(val) - 1] += 1
    return counts, censored


@dataclass
class Estimate:
    frequencies: np.ndarray
    censored: float
    runs: int
    space: StateSpace

    def mass(self, condition: Union[str, lang.BExpr]) -> float:
        """条件を満たす終了状態の頻度の合計"""
        if isinstance(condition, str):
            decls = list(zip(self.space.variables, self.space.domains))
            condition = lang.parse_bexpr(condition, decls)
        return float(sum(f for env, f in zip(self.space.valuations(), self.frequencies)
                         if f and lang.eval_bexpr(condition, env)))

    def table(self) -> pd.DataFrame:
        idx = np.flatnonzero(self.frequencies)
        return pd.DataFrame({
            "state_index_1based": idx + 1,
            "valuation": [self.space.describe(int(i) + 1) for i in idx],
            "frequency": self.frequencies[idx],
        })


def estimate(program: lang.Program, s0, runs: int = 100_000, seed: int = 0,
             max_steps: int = 10_000, n_jobs: int = 1, chunk_size: int = 5000,
             params: Optional[Mapping[str, float]] = None) -> Estimate:
    """
    終了状態の経験分布

    タイムアウトした実行は censored として数え、頻度には含めません
    （頻度の合計は 1 − censored）。
    """
    config = RunConfig(seed=seed, max_steps=max_steps, runs=runs, n_jobs=n_jobs, chunk_size=chunk_size)
    space = enumerate_space(program.decls)
    Machine(program, params)
    val0 = _as_valuation(program, space, s0)

    bounds = [(s, min(s + config.chunk_size, runs)) for s in range(0, runs, config.chunk_size)]
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_chunk)(program, params, val0, seed, start, stop, max_steps)
        for start, stop in bounds
    )
    counts = np.sum([c for c, _ in results], axis=0)
    censored = sum(c for _, c in results)
    return Estimate(counts / float(runs), censored / float(runs), runs, space)


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * l1(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))


if __name__ == "__main__":
    # テスト
    print("モンテカルロ・インタプリタのテスト")
    print("=" * 60)

    source = """
    var x:{0,1};
    var n:{0,1,2,3};
    x ?= {0,1};
    while x == 0 && n < 3 do
      x ?= {0,1};
      n := (n + 1) % 4
    od
    """
    program = lang.parse(source)
    result = estimate(program, {"x": 0, "n": 0}, runs=10000, seed=0)
    print(result.table().to_string(index=False))
    print(f"\nx==1 の頻度: {result.mass('x==1'):.4f}（理論値 0.9375）")
