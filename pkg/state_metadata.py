"""
コンパイル結果のメタデータ管理

T(P) の行列ファイルと対になるサイドカー JSON を保存し、
後から行列の添字（状態 ⊗ ラベル）を解釈できるようにします。
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from los_compiler import LosOperator, StateSpace
from los_errors import LosInputError

XI_CONVENTION = "lexicographic, declaration order, per-variable domain order, label factor last, 1-based"


@dataclass
class CompileMetadata:
    """
    コンパイル結果のメタデータ

    保存される情報:
    - 変数の順序とドメイン
    - ラベル一覧（昇順、ℓ* を含む）と init / stop ラベル
    - 添字の規約、次元、非ゼロ数
    """
    source: str
    variables: List[str]
    domains: Dict[str, List[int]]
    labels: List[int]
    init_label: int
    stop_label: int
    dimension: int
    nnz: int
    xi_convention: str = XI_CONVENTION
    matrix_file: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_operator(cls, op: LosOperator, source: str = "", matrix_file: Optional[str] = None) -> "CompileMetadata":
        return cls(
            source=source,
            variables=list(op.space.variables),
            domains={v: list(d) for v, d in zip(op.space.variables, op.space.domains)},
            labels=list(op.labels),
            init_label=op.init_label,
            stop_label=op.stop_label,
            dimension=op.dimension,
            nnz=op.nnz,
            matrix_file=matrix_file,
        )

    @property
    def density(self) -> float:
        return self.nnz / float(self.dimension ** 2)

    def state_space(self) -> StateSpace:
        return StateSpace(tuple(self.variables), tuple(tuple(self.domains[v]) for v in self.variables))

    def save(self, filepath) -> Path:
        filepath = Path(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, ensure_ascii=False)
        return filepath

    @classmethod
    def load(cls, filepath) -> "CompileMetadata":
        filepath = Path(filepath)
        if not filepath.exists():
            raise FileNotFoundError(f"❌ メタデータが見つかりません: {filepath}")
        with open(filepath, "r", encoding="utf-8") as f:
            data = json.load(f)
        try:
            return cls(**data)
        except TypeError as e:
            raise LosInputError(f"❌ メタデータの形式が不正です: {filepath}: {e}")

    def print_summary(self) -> None:
        print("\n" + "=" * 60)
        print("📊 コンパイル結果 サマリー")
        print("=" * 60)
        print(f"   ソース: {self.source}")
        for v in self.variables:
            print(f"   {v:10s}: {self.domains[v]}")
        print(f"   ラベル: {self.labels}（init={self.init_label}, ℓ*={self.stop_label}）")
        print(f"   dim={self.dimension} nnz={self.nnz} ({self.density:.2%})")
        print("=" * 60)
