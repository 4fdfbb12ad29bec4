"""
LOS コーパス オールインワンスクリプト

programs/ の全プログラムをコンパイルし、行確率性を確認してから
終了分布を求めて一覧表示します。

使用方法:
    python run_all.py
    python run_all.py programs/monty_*.pw
"""

import glob
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

import lang
from config_utils import LosConfig
from linalg_utils import is_row_stochastic, row_sums
from los_compiler import assemble
from matrix_io import save_matrix, save_table
from pai_analysis import extract_label, initial_config, iterate
from state_metadata import CompileMetadata

# パラメータ付きプログラムはこの値で束縛して解析する
DEFAULT_PARAM_VALUE = 0.5


def setup_environment(config: LosConfig) -> Path:
    """環境のセットアップ"""
    print("\n" + "=" * 60)
    print("🚀 LOS コーパス オールインワンスクリプト")
    print("=" * 60)

    out = Path(config.get_paths()["output_dir"])
    out.mkdir(parents=True, exist_ok=True)

    print("\n✓ 環境セットアップ完了")
    return out


def collect_programs(patterns: List[str], config: LosConfig) -> List[Path]:
    if not patterns:
        patterns = [str(Path(config.get_paths()["programs_dir"]) / "*.pw")]
    files = []
    for pattern in patterns:
        if "*" in pattern or "?" in pattern:
            files.extend(Path(p) for p in glob.glob(pattern))
        elif Path(pattern).exists():
            files.append(Path(pattern))
        else:
            print(f"⚠️  ファイルが見つかりません: {pattern}")
    return sorted(set(files))


def process_program(path: Path, out: Path, config: LosConfig) -> Dict[str, object]:
    """
    1 プログラムをコンパイルして解析

    Returns:
        サマリー表の 1 行
    """
    numeric = config.get_numeric_config()
    analysis = config.get_analysis_config()

    program = lang.parse_file(path)
    params = {name: DEFAULT_PARAM_VALUE for name in lang.parameters(program)} or None
    if params:
        print(f"   パラメータ {sorted(params)} を {DEFAULT_PARAM_VALUE} で束縛")
    op = assemble(program, params=params, strict=False, max_entries=int(numeric["max_entries"]))

    stochastic = is_row_stochastic(op.matrix, float(numeric["stochastic_tol"]))
    if not stochastic:
        worst = float(abs(row_sums(op.matrix) - 1.0).max())
        print(f"   ⚠️  行確率的ではありません（行和の最大誤差 {worst:.3g}）")

    matrix_path = save_matrix(op.matrix, out / path.stem, "mm", comment=f"LOS T(P) of {path.name}")
    CompileMetadata.from_operator(op, source=str(path), matrix_file=matrix_path.name).save(
        out / f"{path.stem}.meta.json"
    )

    x0 = initial_config(op.space, 1, op)
    result = iterate(op, x0, float(analysis["eps"]), int(analysis["max_steps"]))
    stop_mass = float(extract_label(result.terminal, op.label_position(op.stop_label), op.label_count).sum())
    print(f"   ✓ dim={op.dimension} nnz={op.nnz} 収束 {result.steps} ステップ ℓ* の質量 {stop_mass:.6f}")

    return {
        "program": path.name,
        "variables": len(op.space.variables),
        "labels": op.label_count,
        "dimension": op.dimension,
        "nnz": op.nnz,
        "density": op.density,
        "stochastic": stochastic,
        "steps": result.steps,
        "stop_mass": stop_mass,
    }


def compile_corpus(files: List[Path], out: Path, config: LosConfig) -> pd.DataFrame:
    print("\n" + "=" * 60)
    print("🔧 STEP 1: コンパイルと解析")
    print("=" * 60)

    rows = []
    for i, path in enumerate(files, 1):
        print(f"\n[{i}/{len(files)}] 処理中: {path.name}")
        print("-" * 60)
        try:
            rows.append(process_program(path, out, config))
        except Exception as e:
            print(f"❌ エラー: {e}")
            continue
    return pd.DataFrame(rows)


def display_results(summary: pd.DataFrame, out: Path) -> None:
    """結果の表示"""
    print("\n" + "=" * 60)
    print("📊 実行結果サマリー")
    print("=" * 60)
    print(summary.to_string(index=False, float_format=lambda v: f"{v:.6g}"))
    path = save_table(summary, out / "corpus_summary.csv")
    print(f"\n💾 サマリー: {path}")

    print("\n次のステップ:")
    print("  1. 抽象化して解析: python los_cli.py analyze programs/monty_hw.pw "
          '--abstraction "d,g=classes:[d==g, d!=g]; o=forget; label=forget"')
    print("  2. 合成: python los_cli.py synthesize programs/swap_sketch.yaml --start zswap")


def main(input_patterns: List[str], config_path: Optional[str] = None) -> bool:
    """
    メイン実行関数

    Args:
        input_patterns: プログラムファイルのパターンリスト（空なら programs/*.pw）
    """
    try:
        config = LosConfig(config_path)
        out = setup_environment(config)

        files = collect_programs(input_patterns, config)
        if not files:
            print("❌ 処理対象のプログラムがありません")
            return False

        print(f"\n📋 処理対象: {len(files)}ファイル")
        for f in files:
            print(f"  - {f}")

        summary = compile_corpus(files, out, config)
        if summary.empty:
            print("❌ すべてのプログラムで失敗しました")
            return False

        display_results(summary, out)

        ok = len(summary) == len(files) and bool(summary["stochastic"].all())
        print("\n" + "=" * 60)
        print("✅ すべての処理が完了しました！" if ok else "⚠️  一部のプログラムで問題がありました")
        print("=" * 60)
        return ok

    except KeyboardInterrupt:
        print("\n\n⚠️  処理が中断されました")
        return False
    except Exception as e:
        print(f"\n❌ 予期しないエラー: {e}")
        import traceback
        traceback.print_exc()
        return False


if __name__ == "__main__":
    if any(a in ("-h", "--help") for a in sys.argv[1:]):
        print("=" * 60)
        print("🎲 LOS コーパス オールインワンスクリプト")
        print("=" * 60)
        print("\n使用方法:")
        print("  python run_all.py [<プログラム.pw> ...]")
        print("\n例:")
        print("  python run_all.py")
        print("  python run_all.py programs/monty_*.pw")
        print("\n処理内容:")
        print("  1. 構文解析とラベル付け")
        print("  2. T(P) の組み立てと行確率性の確認")
        print("  3. 最初の状態からの終了分布")
        print("\n出力:")
        print("  - outputs/<名前>.mtx, outputs/<名前>.meta.json")
        print("  - outputs/corpus_summary.csv")
        print("=" * 60)
        sys.exit(0)

    success = main(sys.argv[1:])
    sys.exit(0 if success else 1)
