"""
スケッチからのプログラム合成

スケッチは「選択サイト × ブロック」の確率行列 λ を持ちます。
- flow-free: ライブラリのブロック演算子 F_j を各ステップで混ぜ、
  T(λ) = T_1·T_2·…·T_k（T_i = Σ_j λ_ij F_j）
- flow-embedded: #name パラメータを持つプログラムの choose に λ を代入して LOS を組み立てる

目的関数:
- OperatorObjective:  Φ_ρω(λ) = ‖A†T(λ)A − S‖ + ρR(λ) + ωW(λ)
- TerminalObjective:  Φ(λ) = x₀·T(λ)^∞·A の指定座標（最大化は −Φ を最小化）

最適化は有限差分の射影勾配法（Armijo バックトラッキング、行ごとの単体射影）、
頂点への丸め、シード付きランダム再始動です。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps
import yaml
from joblib import Parallel, delayed

import lang
from linalg_utils import operator_norm
from los_compiler import LosOperator, StateSpace, assemble, block_semantics, enumerate_space, parse_valuation
from los_errors import DimensionError, LosInputError, ProbabilityError
from matrix_io import load_matrix
from pai_analysis import Abstraction, abstract_state, initial_config, iterate, parse_abstraction_spec

FLOW_FREE = "flow-free"
FLOW_EMBEDDED = "flow-embedded"
FEASIBILITY_TOL = 1e-9


# =====================
# スケッチ
# =====================
@dataclass
class Sketch:
    mode: str
    space: StateSpace
    steps: int
    n_blocks: int
    name: str = ""
    library: List[lang.Stmt] = field(default_factory=list)
    operators: Optional[np.ndarray] = None      # (ブロック数, N, N) の密行列
    program: Optional[lang.Program] = None
    sites: List[lang.Choose] = field(default_factory=list)
    target: Optional[np.ndarray] = None
    abstraction_spec: str = "id"
    penalized: Optional[str] = None
    initial: Dict[str, np.ndarray] = field(default_factory=dict)
    objective: Dict[str, object] = field(default_factory=dict)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.steps, self.n_blocks

    def vertex(self, choices: Sequence[int]) -> np.ndarray:
        """各行で 1 始まりのブロック番号を選ぶ頂点 λ"""
        if len(choices) != self.steps:
            raise DimensionError(f"❌ 頂点の長さ {len(choices)} がステップ数 {self.steps} と一致しません")
        lam = np.zeros(self.shape)
        for i, j in enumerate(choices):
            if not 1 <= j <= self.n_blocks:
                raise LosInputError(f"❌ ブロック番号 {j} は 1..{self.n_blocks} の範囲外です")
            lam[i, j - 1] = 1.0
        return lam

    def check_feasible(self, lam: np.ndarray) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != self.shape:
            raise DimensionError(f"❌ λ の形 {lam.shape} がスケッチ {self.shape} と一致しません")
        if lam.min() < -FEASIBILITY_TOL or np.any(np.abs(lam.sum(axis=1) - 1.0) > FEASIBILITY_TOL):
            raise ProbabilityError("❌ infeasible λ: 各行は非負で合計 1 でなければなりません")
        return lam

    # ---- flow-embedded のパラメータ対応
    def lambda_from_params(self, values: Mapping[str, float]) -> np.ndarray:
        if self.mode != FLOW_EMBEDDED:
            raise LosInputError("❌ パラメータ指定は flow-embedded スケッチでのみ使えます")
        return np.array([[lang.prob_value(p, values) for p, _ in site.branches] for site in self.sites])

    def params_from_lambda(self, lam: np.ndarray) -> Dict[str, float]:
        values: Dict[str, float] = {}
        for i, site in enumerate(self.sites):
            for j, (prob, _) in enumerate(site.branches):
                if isinstance(prob, lang.ProbParam):
                    values.setdefault(prob.name, float(lam[i, j]))
        return values

    def instantiate(self, lam: np.ndarray, strict: bool = True) -> Union[np.ndarray, LosOperator]:
        """
        λ から実効演算子を作る

        strict=False は最適化中の評価用で、実行可能性を検査しません。
        flow-embedded ではこのとき各行を合計で割ってから組み立てます。
        """
        lam = self.check_feasible(lam) if strict else np.asarray(lam, dtype=float)
        if self.mode == FLOW_FREE:
            mixtures = np.tensordot(lam, self.operators, axes=(1, 0))
            T = np.eye(self.space.size)
            for step in mixtures:
                T = T @ step
            return T
        if not strict:
            sums = lam.sum(axis=1, keepdims=True)
            lam = np.where(sums > 0, lam / np.where(sums > 0, sums, 1.0), lam)
        decisions = {site.label: [(j, float(lam[i, j])) for j in range(self.n_blocks)]
                     for i, site in enumerate(self.sites)}
        return assemble(lang.specialize(self.program, decisions), strict=strict)


def _block_operator(block: lang.Stmt, space: StateSpace) -> np.ndarray:
    if not isinstance(block, lang.ATOMIC):
        raise LosInputError(f"❌ ライブラリには原子ブロックだけを置けます: {lang.pretty_inline(block)}")
    return block_semantics(block, space).positive.toarray()


def flow_free_sketch(decls: Sequence[Tuple[str, Sequence[int]]], library_sources: Sequence[str],
                     steps: int, **kwargs) -> Sketch:
    space = enumerate_space(decls)
    if steps < 1:
        raise LosInputError(f"❌ ステップ数は 1 以上: {steps}")
    library = [lang.parse_statement(src, decls) for src in library_sources]
    if not library:
        raise LosInputError("❌ ブロックライブラリが空です")
    operators = np.stack([_block_operator(b, space) for b in library])
    return Sketch(FLOW_FREE, space, steps, len(library), library=library, operators=operators, **kwargs)


def embedded_sketch(program: lang.Program, **kwargs) -> Sketch:
    sites = lang.parametric_sites(program)
    if not sites:
        raise LosInputError("❌ プログラムに #name パラメータを持つ choose がありません")
    widths = {len(s.branches) for s in sites}
    if len(widths) != 1:
        raise LosInputError(f"❌ すべてのパラメータ付き choose は同じ分岐数である必要があります: {sorted(widths)}")
    space = enumerate_space(program.decls)
    return Sketch(FLOW_EMBEDDED, space, len(sites), widths.pop(), program=program, sites=sites, **kwargs)


def _target_matrix(spec, base_dir: Path) -> np.ndarray:
    if "matrix" in spec:
        return np.asarray(spec["matrix"], dtype=float)
    if "permutation" in spec:
        image = [int(k) for k in spec["permutation"]]
        n = len(image)
        if sorted(image) != list(range(1, n + 1)):
            raise LosInputError(f"❌ permutation は 1..{n} の並べ替えである必要があります: {image}")
        S = np.zeros((n, n))
        S[np.arange(n), np.array(image) - 1] = 1.0
        return S
    if "file" in spec:
        return load_matrix(base_dir / spec["file"]).toarray()
    raise LosInputError("❌ target には matrix / permutation / file のいずれかが必要です")


def load_sketch(path) -> Sketch:
    """
    スケッチの読み込み

    .pw: #name パラメータ付きのプログラム（flow-embedded）
    .yaml: variables / library / steps / target / abstraction / penalized / initial
           または program: <.pw ファイル> と objective
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"❌ スケッチが見つかりません: {path}")
    if path.suffix == ".pw":
        return embedded_sketch(lang.parse_file(path), name=path.stem)

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise LosInputError(f"❌ スケッチ YAML の読み込みに失敗: {path}: {e}")
    name = data.get("name", path.stem)
    common = dict(
        name=name,
        abstraction_spec=data.get("abstraction", "id"),
        penalized=data.get("penalized"),
        objective=dict(data.get("objective", {})),
    )

    if "program" in data:
        sketch = embedded_sketch(lang.parse_file(path.parent / data["program"]), **common)
    else:
        for key in ("variables", "library", "steps"):
            if key not in data:
                raise LosInputError(f"❌ スケッチに {key} がありません: {path}")
        decls = [(v, list(domain)) for v, domain in data["variables"].items()]
        sketch = flow_free_sketch(decls, [str(s) for s in data["library"]], int(data["steps"]), **common)

    if "target" in data:
        sketch.target = _target_matrix(data["target"], path.parent)
    for key, value in (data.get("initial") or {}).items():
        if isinstance(value, dict) and "vertex" in value:
            sketch.initial[key] = sketch.vertex(value["vertex"])
        elif isinstance(value, dict) and "params" in value:
            sketch.initial[key] = sketch.lambda_from_params(value["params"])
        elif isinstance(value, dict) and "matrix" in value:
            sketch.initial[key] = np.asarray(value["matrix"], dtype=float)
        else:
            sketch.initial[key] = np.asarray(value, dtype=float)
    return sketch


def access_masks(library: Sequence[lang.Stmt], var: str) -> Tuple[np.ndarray, np.ndarray]:
    """P_r, P_w の対角: var を読むブロック / var に書くブロック"""
    reads = np.array([1.0 if var in lang.read_vars(b) else 0.0 for b in library])
    writes = np.array([1.0 if lang.assigned_var(b) == var else 0.0 for b in library])
    return reads, writes


# =====================
# 目的関数
# =====================
def _diag(P) -> np.ndarray:
    P = P.toarray() if sps.issparse(P) else np.asarray(P, dtype=float)
    return np.diag(P) if P.ndim == 2 else P


def penalty(lam: np.ndarray, P_r, P_w, rho: float, omega: float) -> float:
    """ρR + ωW、R = Σ_i Σ_j λ_ij (P_r)_jj（W も同様）"""
    lam = np.asarray(lam, dtype=float)
    R = float((lam @ _diag(P_r)).sum())
    W = float((lam @ _diag(P_w)).sum())
    return rho * R + omega * W


@dataclass
class OperatorObjective:
    target: np.ndarray
    abstraction: Abstraction
    rho: float = 1.0
    omega: float = 1.0
    read_mask: Optional[np.ndarray] = None
    write_mask: Optional[np.ndarray] = None
    norm: str = "frobenius"
    tol: float = 1e-6

    def __post_init__(self):
        self.target = np.asarray(self.target.toarray() if sps.issparse(self.target) else self.target, dtype=float)
        self._A = self.abstraction.matrix.toarray()
        self._Adag = self.abstraction.pinv.toarray()
        if self._A.shape[1] != self.target.shape[0] or self.target.shape[0] != self.target.shape[1]:
            raise DimensionError(
                f"❌ 抽象化の列数 {self._A.shape[1]} と目標 S {self.target.shape} が一致しません"
            )

    @property
    def success_threshold(self) -> Optional[float]:
        return self.tol

    def abstract(self, T) -> np.ndarray:
        M = T.matrix if isinstance(T, LosOperator) else T
        M = M.toarray() if sps.issparse(M) else np.asarray(M, dtype=float)
        if M.shape != (self._A.shape[0], self._A.shape[0]):
            raise DimensionError(f"❌ T の次元 {M.shape} が抽象化の行数 {self._A.shape[0]} と一致しません")
        return self._Adag @ M @ self._A

    def penalty(self, lam: np.ndarray) -> float:
        if self.read_mask is None or (self.rho == 0 and self.omega == 0):
            return 0.0
        return penalty(lam, self.read_mask, self.write_mask, self.rho, self.omega)

    def evaluate(self, sketch: Sketch, lam: np.ndarray) -> float:
        return phi_distance(sketch.instantiate(lam, strict=False), self) + self.penalty(lam)

    def loss(self, sketch: Sketch, lam: np.ndarray) -> float:
        return self.evaluate(sketch, lam)


def phi_distance(T, objective: OperatorObjective) -> float:
    """Φ₀₀ = ‖A†TA − S‖"""
    return operator_norm(objective.abstract(T) - objective.target, objective.norm)


@dataclass
class TerminalObjective:
    """終了分布を抽象化した座標（Monty Hall の勝率など）"""
    s0: Union[Mapping[str, int], np.ndarray]
    abstraction_spec: str
    coordinate: int = 1
    maximize: bool = True
    eps: float = 1e-12
    max_steps: int = 1_000_000
    _abstractions: Dict[Tuple[int, ...], Abstraction] = field(default_factory=dict, repr=False)

    @property
    def success_threshold(self) -> Optional[float]:
        return None

    def evaluate(self, sketch: Sketch, lam: np.ndarray) -> float:
        op = sketch.instantiate(lam, strict=False)
        x0 = initial_config(op.space, self.s0, op)
        result = iterate(op, x0, self.eps, self.max_steps)
        if op.labels not in self._abstractions:
            self._abstractions[op.labels] = parse_abstraction_spec(self.abstraction_spec, op.space, op.labels)
        abstracted = abstract_state(result.terminal, self._abstractions[op.labels])
        if not 1 <= self.coordinate <= abstracted.shape[0]:
            raise LosInputError(f"❌ 座標 {self.coordinate} は 1..{abstracted.shape[0]} の範囲外です")
        return float(abstracted[self.coordinate - 1])

    def loss(self, sketch: Sketch, lam: np.ndarray) -> float:
        value = self.evaluate(sketch, lam)
        return -value if self.maximize else value


Objective = Union[OperatorObjective, TerminalObjective]


def build_objective(sketch: Sketch, kind: Optional[str] = None, rho: float = 1.0, omega: float = 1.0,
                    norm: str = "frobenius", tol: float = 1e-6, **terminal) -> Objective:
    """
    スケッチの宣言と設定から目的関数を作る

    kind: distance（Φ₀₀）/ penalized（Φ_ρω）/ terminal。省略時はスケッチの objective.kind、
    それも無ければ target があれば penalized、無ければ terminal。
    """
    declared = dict(sketch.objective)
    kind = kind or declared.get("kind") or ("penalized" if sketch.target is not None else "terminal")
    if kind in ("distance", "penalized"):
        if sketch.target is None:
            raise LosInputError("❌ このスケッチには目標演算子 S（target）がありません")
        labels = sketch.program.labels if sketch.mode == FLOW_EMBEDDED else None
        spec = terminal.get("abstraction") or sketch.abstraction_spec
        abstraction = parse_abstraction_spec(spec, sketch.space, labels)
        read_mask = write_mask = None
        if sketch.penalized and sketch.mode == FLOW_FREE:
            read_mask, write_mask = access_masks(sketch.library, sketch.penalized)
        if kind == "distance":
            rho = omega = 0.0
        return OperatorObjective(sketch.target, abstraction, rho, omega, read_mask, write_mask, norm, tol)
    if kind != "terminal":
        raise LosInputError(f"❌ 未知の目的関数: {kind}（distance / penalized / terminal）")

    merged = {k: v for k, v in declared.items() if k != "kind"}
    merged.update({k: v for k, v in terminal.items() if v is not None})
    s0 = merged.get("s0")
    if s0 is None:
        raise LosInputError("❌ terminal 目的関数には初期状態 s0 が必要です")
    if isinstance(s0, str):
        s0 = parse_valuation(s0, sketch.space)
    return TerminalObjective(
        s0=s0,
        abstraction_spec=merged.get("abstraction", sketch.abstraction_spec),
        coordinate=int(merged.get("coordinate", 1)),
        maximize=bool(merged.get("maximize", True)),
        eps=float(merged.get("eps", 1e-12)),
        max_steps=int(merged.get("max_steps", 1_000_000)),
    )


# =====================
# 最適化
# =====================
def project_simplex(row: np.ndarray) -> np.ndarray:
    """確率単体へのユークリッド射影（ソート法）"""
    y = np.asarray(row, dtype=float).ravel()
    u = np.sort(y)[::-1]
    cssv = np.cumsum(u) - 1.0
    k = np.arange(1, y.shape[0] + 1)
    rho = np.nonzero(u - cssv / k > 0)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def project_rows(lam: np.ndarray) -> np.ndarray:
    return np.vstack([project_simplex(r) for r in np.atleast_2d(lam)])


def feasible_start(lam: np.ndarray) -> np.ndarray:
    """
    開始点を単体上に移す

    非負で合計が正の行は合計で割り、相対的な重みを保ちます。
    負の成分を含む行や全ゼロの行はユークリッド射影します。
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    rows = []
    for r in lam:
        total = r.sum()
        rows.append(r / total if r.min() >= 0.0 and total > 0.0 else project_simplex(r))
    return np.vstack(rows)


def fd_gradient(f: Callable[[np.ndarray], float], lam: np.ndarray, h: float = 1e-7,
                scheme: str = "forward", f0: Optional[float] = None) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    grad = np.zeros_like(lam)
    if scheme == "forward" and f0 is None:
        f0 = f(lam)
    for idx in np.ndindex(lam.shape):
        up = lam.copy()
        up[idx] += h
        if scheme == "central":
            down = lam.copy()
            down[idx] -= h
            grad[idx] = (f(up) - f(down)) / (2.0 * h)
        else:
            grad[idx] = (f(up) - f0) / h
    return grad


def round_to_vertex(lam: np.ndarray) -> np.ndarray:
    vertex = np.zeros_like(lam)
    vertex[np.arange(lam.shape[0]), np.argmax(lam, axis=1)] = 1.0
    return vertex


@dataclass
class OptSettings:
    max_iter: int = 500
    tol: float = 1e-6
    restarts: int = 20
    seed: int = 0
    fd_step: float = 1e-7
    armijo_c: float = 1e-4
    armijo_beta: float = 0.5
    initial_step: float = 1.0
    min_step: float = 1e-12
    polish: bool = True
    n_jobs: int = 1
    scheme: str = "forward"

    @classmethod
    def from_config(cls, config: Mapping[str, object]) -> "OptSettings":
        names = cls.__dataclass_fields__
        return cls(**{k: v for k, v in config.items() if k in names})


@dataclass
class OptResult:
    lam: np.ndarray
    value: float
    loss: float
    iterations: int
    restarts_used: int
    converged: bool
    trace: List[float]


@dataclass
class _Descent:
    lam: np.ndarray
    loss: float
    iterations: int
    trace: List[float]
    stationary: bool


def _vertex_polish(f: Callable[[np.ndarray], float], lam: np.ndarray, fval: float, max_sweeps: int = 20):
    """頂点に丸め、行ごとに最良のブロックへ置き換える局所探索"""
    vertex = round_to_vertex(lam)
    fv = f(vertex)
    for _ in range(max_sweeps):
        improved = False
        for i in range(vertex.shape[0]):
            for j in range(vertex.shape[1]):
                if vertex[i, j] == 1.0:
                    continue
                cand = vertex.copy()
                cand[i] = 0.0
                cand[i, j] = 1.0
                fc = f(cand)
                if fc < fv:
                    vertex, fv, improved = cand, fc, True
        if not improved:
            break
    if fv <= fval:
        return vertex, fv, True
    return lam, fval, False


def _descend(sketch: Sketch, objective: Objective, lam0: np.ndarray, settings: OptSettings) -> _Descent:
    def f(lam):
        return objective.loss(sketch, lam)

    threshold = objective.success_threshold
    lam = feasible_start(lam0)
    fval = f(lam)
    trace = [fval]
    iterations = 0
    stationary = False
    for it in range(1, settings.max_iter + 1):
        if threshold is not None and fval <= threshold:
            break
        grad = fd_gradient(f, lam, settings.fd_step, settings.scheme, f0=fval)
        step = settings.initial_step
        accepted = None
        while step >= settings.min_step:
            cand = project_rows(lam - step * grad)
            fc = f(cand)
            # 射影勾配の Armijo 条件
            if fc <= fval + settings.armijo_c * float(np.sum(grad * (cand - lam))):
                accepted = (cand, fc)
                break
            step *= settings.armijo_beta
        if accepted is None or np.abs(accepted[0] - lam).max() < 1e-12:
            stationary = True
            break
        lam, fval = accepted
        trace.append(fval)
        iterations = it

    if settings.polish and not (threshold is not None and fval <= threshold):
        lam, fval, changed = _vertex_polish(f, lam, fval)
        if changed:
            trace.append(fval)
    return _Descent(lam, fval, iterations, trace, stationary)


def restart_point(sketch: Sketch, seed: int, index: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
    return rng.dirichlet(np.ones(sketch.n_blocks), size=sketch.steps)


def optimize(sketch: Sketch, objective: Objective, lam0: Optional[np.ndarray] = None,
             settings: Optional[OptSettings] = None, verbose: bool = False) -> OptResult:
    """
    min loss(λ)（Φ_ρω、または最大化なら −Φ）

    λ0 は feasible_start で単体上に移してから降下します。
    λ0 から降下し、目標値（tol）に届かなければシード付きの再始動を行います。
    再始動は n_jobs ずつまとめて評価し、成功したうち番号の最も小さいものを採用するので、
    結果は n_jobs によりません。目標値を持たない目的関数（terminal）は再始動しません。
    """
    settings = settings or OptSettings()
    if lam0 is None:
        lam0 = np.full(sketch.shape, 1.0 / sketch.n_blocks)
    lam0 = np.asarray(lam0, dtype=float)
    if lam0.shape != sketch.shape:
        raise DimensionError(f"❌ λ0 の形 {lam0.shape} がスケッチ {sketch.shape} と一致しません")
    threshold = objective.success_threshold

    def succeeded(d: _Descent) -> bool:
        return threshold is not None and d.loss <= threshold

    best = _descend(sketch, objective, lam0, settings)
    best_index = 0
    if verbose:
        print(f"   開始点 0: loss={best.loss:.6g}（{best.iterations} 反復）")

    if threshold is not None and not succeeded(best):
        batch = max(1, int(settings.n_jobs))
        index = 1
        while index <= settings.restarts and not succeeded(best):
            indices = list(range(index, min(index + batch, settings.restarts + 1)))
            results = Parallel(n_jobs=settings.n_jobs)(
                delayed(_descend)(sketch, objective, restart_point(sketch, settings.seed, k), settings)
                for k in indices
            )
            for k, d in zip(indices, results):
                if verbose:
                    print(f"   再始動 {k}: loss={d.loss:.6g}（{d.iterations} 反復）")
                if succeeded(d) or d.loss < best.loss:
                    best, best_index = d, k
                if succeeded(d):
                    break
            index = indices[-1] + 1

    converged = succeeded(best) if threshold is not None else best.stationary or best.iterations < settings.max_iter
    value = objective.evaluate(sketch, best.lam)
    return OptResult(best.lam, value, best.loss, best.iterations, best_index, converged, best.trace)


# =====================
# 掃引・抽出
# =====================
def parse_grid(text: str) -> np.ndarray:
    """'start:step:stop'（両端を含む）またはカンマ区切り"""
    text = text.strip()
    if not text:
        return np.array([])
    try:
        if ":" in text:
            start, step, stop = (float(s) for s in text.split(":"))
            if step <= 0:
                raise LosInputError(f"❌ グリッドの刻みは正の値: {step}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return np.round(start + step * np.arange(max(count, 0)), 12)
        return np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise LosInputError(f"❌ グリッドの形式が不正です: {text!r}（例: 0:0.1:1）")


def sweep(sketch: Sketch, objective: Objective, grid: Sequence[float], n_jobs: int = 1) -> List[Tuple[float, float]]:
    """単一パラメータ p の格子上で Φ(p) を評価"""
    if sketch.mode != FLOW_EMBEDDED:
        raise LosInputError("❌ 掃引には #name パラメータを 1 つ持つプログラムが必要です")
    names = lang.parameters(sketch.program)
    if len(names) != 1:
        raise LosInputError(f"❌ 掃引できるのはパラメータが 1 つのときだけです: {names}")
    grid = [float(p) for p in grid]
    outside = [p for p in grid if not 0.0 <= p <= 1.0]
    if outside:
        raise LosInputError(f"❌ グリッドの値は [0,1] の範囲内: {outside}")
    if not grid:
        return []
    lams = [sketch.lambda_from_params({names[0]: p}) for p in grid]
    values = Parallel(n_jobs=n_jobs)(delayed(objective.evaluate)(sketch, lam) for lam in lams)
    return list(zip(grid, (float(v) for v in values)))


def _row_decision(row: np.ndarray, threshold: float, min_weight: float):
    j = int(np.argmax(row))
    if row[j] >= threshold:
        return j
    kept = [(k, float(w)) for k, w in enumerate(row) if w >= min_weight]
    total = sum(w for _, w in kept)
    return [(k, w / total) for k, w in kept]


def extract_statement(sketch: Sketch, lam: np.ndarray, threshold: float = 0.99,
                      min_weight: float = 0.01) -> Union[lang.Stmt, lang.Program]:
    """頂点に近い行は決定的なブロックに、それ以外は choose として残す"""
    lam = sketch.check_feasible(lam)
    decisions = [_row_decision(row, threshold, min_weight) for row in lam]
    if sketch.mode == FLOW_EMBEDDED:
        return lang.specialize(sketch.program, {s.label: d for s, d in zip(sketch.sites, decisions)})
    stmts: List[lang.Stmt] = []
    for i, decision in enumerate(decisions):
        if isinstance(decision, int):
            stmts.append(sketch.library[decision])
        elif len(decision) == 1:
            stmts.append(sketch.library[decision[0][0]])
        else:
            branches = tuple((lang.ProbLiteral(round(w, 12)), sketch.library[k]) for k, w in decision)
            stmts.append(lang.Choose(branches, i + 1))
    return lang.seq_of(stmts)


def extract_program(sketch: Sketch, lam: np.ndarray, threshold: float = 0.99,
                    min_weight: float = 0.01) -> str:
    result = extract_statement(sketch, lam, threshold, min_weight)
    if isinstance(result, lang.Program):
        return lang.pretty(result)
    return lang.pretty_inline(result)


def chosen_blocks(lam: np.ndarray) -> List[int]:
    """各行で最大の重みを持つブロック（1 始まり）"""
    return [int(j) + 1 for j in np.argmax(np.asarray(lam), axis=1)]
