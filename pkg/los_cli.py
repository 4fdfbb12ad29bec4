"""
LOS ツールキット コマンドライン

使用方法:
    python los_cli.py compile programs/monty_ht.pw --format json
    python los_cli.py analyze programs/monty_ht.pw --abstraction "d,g=classes:[d==g, d!=g]; o=forget; label=forget"
    python los_cli.py simulate programs/monty_hw.pw --runs 100000 --seed 0 --condition "d==g"
    python los_cli.py synthesize programs/swap_sketch.yaml --objective penalized --start zswap
    python los_cli.py sweep programs/monty_sketch.yaml --grid 0:0.1:1

終了コード: 0 正常 / 1 入力エラー / 2 非収束 / 3 探索予算の枯渇
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import joblib
import numpy as np
import pandas as pd

import lang
from config_utils import LosConfig
from los_compiler import LosOperator, assemble, enumerate_space, parse_valuation
from los_errors import BudgetExhaustedError, ConvergenceError, LosInputError
from matrix_io import distribution_table, matrix_table, save_matrix, save_table
from monte_carlo import estimate
from pai_analysis import abstract_state, extract_label, initial_config, iterate, parse_abstraction_spec
from state_metadata import CompileMetadata
from synthesis import (
    FLOW_FREE, OptSettings, build_objective, chosen_blocks, extract_program, load_sketch, optimize,
    parse_grid, sweep,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONVERGENCE = 2
EXIT_BUDGET = 3


def _banner(config: LosConfig, title: str) -> None:
    if config.verbose:
        print("\n" + "=" * 60)
        print(title)
        print("=" * 60)


def _say(config: LosConfig, message: str) -> None:
    if config.verbose:
        print(message)


def _output_dir(args, config: LosConfig) -> Path:
    out = Path(args.output_dir or config.get_paths()["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(items: Optional[List[str]]) -> Optional[Dict[str, float]]:
    """--param p=0.5 の並びを辞書に（指定なしなら None）"""
    if not items:
        return None
    values = {}
    for item in items:
        name, sep, value = item.partition("=")
        try:
            values[name.strip().lstrip("#")] = float(value)
        except ValueError:
            sep = ""
        if not sep:
            raise LosInputError(f"❌ パラメータの形式が不正です: {item!r}（例: p=0.5）")
    return values


def _compile(path: str, config: LosConfig, params: Optional[Dict[str, float]] = None) -> LosOperator:
    numeric = config.get_numeric_config()
    program = lang.parse_file(_existing(path))
    return assemble(program, params=params, max_entries=int(numeric["max_entries"]),
                    stochastic_tol=float(numeric["stochastic_tol"]))


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"❌ ファイルが見つかりません: {p}")
    return p


def _s0(text: Optional[str], space):
    if text:
        return parse_valuation(text, space)
    return space.valuation(1)


# =====================
# サブコマンド
# =====================
def cmd_compile(args, config: LosConfig) -> int:
    _banner(config, f"🔧 コンパイル: {args.program}")
    op = _compile(args.program, config)
    out = _output_dir(args, config)
    stem = Path(args.program).stem
    matrix_path = save_matrix(op.matrix, out / stem, args.format or "mm",
                              comment=f"LOS T(P) of {Path(args.program).name}")
    metadata = CompileMetadata.from_operator(op, source=str(args.program), matrix_file=matrix_path.name)
    meta_path = metadata.save(out / f"{stem}.meta.json")
    if config.verbose:
        metadata.print_summary()
    print(f"dim={op.dimension} nnz={op.nnz} density={op.density:.4%}")
    _say(config, f"💾 行列: {matrix_path}")
    _say(config, f"💾 メタデータ: {meta_path}")
    return EXIT_OK


def cmd_analyze(args, config: LosConfig) -> int:
    _banner(config, f"📊 解析: {args.program}")
    analysis = config.get_analysis_config()
    op = _compile(args.program, config, _params(args.param))
    abstraction = parse_abstraction_spec(args.abstraction, op.space, op.labels) if args.abstraction else None
    x0 = initial_config(op.space, _s0(args.s0, op.space), op)
    result = iterate(op, x0, float(analysis["eps"]), int(analysis["max_steps"]))
    _say(config, f"✓ 収束: {result.steps} ステップ（残差 {result.residual:.3g}）")

    stop_mass = extract_label(result.terminal, op.label_position(op.stop_label), op.label_count).sum()
    _say(config, f"✓ ℓ*={op.stop_label} の質量: {stop_mass:.6f}")

    terminal = distribution_table(result.terminal, lambda i: op.space.describe(op.split_config(i)[0]))
    terminal.insert(2, "label", [op.split_config(int(i))[1] for i in terminal["config_index_1based"]])
    terminal.insert(3, "configuration", [op.describe_config(int(i)) for i in terminal["config_index_1based"]])
    tables = {"terminal": terminal}
    if abstraction is not None:
        vec = abstract_state(result.terminal, abstraction)
        tables["abstract"] = pd.DataFrame({
            "abstract_index_1based": np.arange(1, vec.shape[0] + 1),
            "abstract_class": abstraction.describe_columns(),
            "probability": vec,
        })

    out = _output_dir(args, config)
    stem = Path(args.program).stem
    for name, df in tables.items():
        path = save_table(df, out / f"{stem}_{name}.csv")
        _say(config, f"💾 {path}")
        if config.verbose:
            print(df.to_string(index=False, float_format=lambda v: f"{v:.6f}"))
    return EXIT_OK


def cmd_simulate(args, config: LosConfig) -> int:
    _banner(config, f"🎲 シミュレーション: {args.program}")
    sim = config.get_simulation_config()
    program = lang.parse_file(_existing(args.program))
    space = enumerate_space(program.decls)
    result = estimate(
        program, _s0(args.s0, space),
        runs=int(args.runs or sim["runs"]), seed=int(sim["seed"]),
        max_steps=int(sim["max_steps"]), n_jobs=int(args.n_jobs or sim["n_jobs"]),
        chunk_size=int(sim["chunk_size"]), params=_params(args.param),
    )
    _say(config, f"✓ 実行回数: {result.runs:,}  タイムアウト: {result.censored:.4%}")
    if args.condition:
        print(f"{args.condition}: {result.mass(args.condition):.6f}")
    path = save_table(result.table(), _output_dir(args, config) / f"{Path(args.program).stem}_simulation.csv")
    _say(config, f"💾 {path}")
    return EXIT_OK


def _objective_for(args, sketch, config: LosConfig):
    synth = config.get_synthesis_config()
    numeric = config.get_numeric_config()
    analysis = config.get_analysis_config()
    kind = args.objective
    if kind is None and sketch.target is not None:
        kind = synth["objective"]
    return build_objective(
        sketch, kind,
        rho=float(synth["rho"]), omega=float(synth["omega"]),
        norm=str(numeric["norm"]), tol=float(synth["tol"]),
        s0=args.s0, abstraction=args.abstraction, coordinate=args.coordinate,
        maximize=False if args.minimize else None,
        eps=float(analysis["eps"]), max_steps=int(analysis["max_steps"]),
    )


def cmd_synthesize(args, config: LosConfig) -> int:
    _banner(config, f"🧩 合成: {args.sketch}")
    config.print_summary()
    synth = config.get_synthesis_config()
    sketch = load_sketch(_existing(args.sketch))
    objective = _objective_for(args, sketch, config)
    if args.start:
        if args.start not in sketch.initial:
            raise LosInputError(f"❌ 初期値 {args.start!r} がスケッチにありません: {sorted(sketch.initial)}")
        lam0 = sketch.initial[args.start]
    else:
        lam0 = next(iter(sketch.initial.values()), None)

    settings = OptSettings.from_config(synth)
    result = optimize(sketch, objective, lam0, settings, verbose=config.verbose)
    program_text = extract_program(sketch, result.lam, float(synth["threshold"]))

    out = _output_dir(args, config)
    stem = Path(args.sketch).stem
    save_table(matrix_table(result.lam), out / f"{stem}_lambda.csv")
    save_table(pd.DataFrame({"iteration": np.arange(len(result.trace)), "objective": result.trace}),
               out / f"{stem}_trace.csv")
    with open(out / f"{stem}_program.txt", "w", encoding="utf-8") as f:
        f.write(program_text.rstrip("\n") + "\n")
    joblib.dump(result, out / f"{stem}_result.joblib")

    print(f"Φ*={result.value:.10g} converged={result.converged} restarts={result.restarts_used}")
    if sketch.mode == FLOW_FREE:
        print(f"blocks={chosen_blocks(result.lam)}")
    print(program_text.rstrip("\n"))
    if not result.converged and objective.success_threshold is not None:
        raise BudgetExhaustedError(
            f"❌ {settings.restarts} 回の再始動で Φ ≤ {settings.tol:g} に届きませんでした"
            f"（最良 {result.loss:.6g}）。--rho / --omega を大きくすると改善することがあります"
        )
    return EXIT_OK


def cmd_sweep(args, config: LosConfig) -> int:
    _banner(config, f"📈 パラメータ掃引: {args.sketch}")
    sw = config.get_sweep_config()
    sketch = load_sketch(_existing(args.sketch))
    objective = _objective_for(args, sketch, config)
    grid = parse_grid(args.grid) if args.grid is not None else parse_grid(f"{sw['start']}:{sw['step']}:{sw['stop']}")
    rows = sweep(sketch, objective, grid, n_jobs=int(sw["n_jobs"]))
    df = pd.DataFrame(rows, columns=["p", "phi"])
    path = save_table(df, _output_dir(args, config) / f"{Path(args.sketch).stem}_sweep.csv")
    print(df.to_string(index=False, float_format=lambda v: f"{v:.6f}"))
    _say(config, f"💾 {path}")
    return EXIT_OK


# =====================
# 引数
# =====================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="確率的 while プログラムの LOS コンパイラ・解析・合成ツール")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", type=str, default=None, help="設定ファイル（デフォルト: config.yaml / $LOS_CONFIG）")
    shared.add_argument("--output-dir", type=str, default=None, help="出力先ディレクトリ")
    shared.add_argument("--format", choices=["mm", "json", "csv"], default=None, help="行列の出力形式")
    shared.add_argument("--seed", type=int, default=None, help="乱数シード")
    shared.add_argument("--eps", type=float, default=None, help="反復の収束判定 ‖x·T − x‖₁")
    shared.add_argument("--max-steps", type=int, default=None, help="反復・実行の最大ステップ数")
    shared.add_argument("--quiet", action="store_true", help="進捗表示を抑制")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", parents=[shared], help="T(P) を行列ファイルに出力")
    p.add_argument("program")
    p.set_defaults(handler=cmd_compile)

    p = sub.add_parser("analyze", parents=[shared], help="終了分布と抽象化ベクトル")
    p.add_argument("program")
    p.add_argument("--abstraction", type=str, default=None, help='例: "o=forget; label=forget"')
    p.add_argument("--s0", type=str, default=None, help='初期状態（例: "d=0,g=0,o=0"）')
    p.add_argument("--param", action="append", default=None, help="パラメータの値（例: p=0.5、複数可）")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("simulate", parents=[shared], help="モンテカルロ推定")
    p.add_argument("program")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--n-jobs", type=int, default=None)
    p.add_argument("--s0", type=str, default=None)
    p.add_argument("--condition", type=str, default=None, help='頻度を表示する条件（例: "d==g"）')
    p.add_argument("--param", action="append", default=None, help="パラメータの値（例: p=0.5、複数可）")
    p.set_defaults(handler=cmd_simulate)

    for name, handler, text in (("synthesize", cmd_synthesize, "スケッチから λ* とプログラムを合成"),
                                ("sweep", cmd_sweep, "単一パラメータの Φ(p) 掃引")):
        p = sub.add_parser(name, parents=[shared], help=text)
        p.add_argument("sketch")
        p.add_argument("--objective", choices=["distance", "penalized", "terminal"], default=None)
        p.add_argument("--abstraction", type=str, default=None)
        p.add_argument("--coordinate", type=int, default=None, help="terminal 目的関数の座標（1 始まり）")
        p.add_argument("--s0", type=str, default=None)
        p.add_argument("--minimize", action="store_true", help="terminal 目的関数を最小化")
        p.set_defaults(handler=handler)
        if name == "synthesize":
            p.add_argument("--rho", type=float, default=None)
            p.add_argument("--omega", type=float, default=None)
            p.add_argument("--tol", type=float, default=None)
            p.add_argument("--restarts", type=int, default=None)
            p.add_argument("--start", type=str, default=None, help="スケッチの initial に定義した λ0 の名前")
        else:
            p.add_argument("--grid", type=str, default=None, help="start:step:stop（例: 0:0.1:1）")
    return parser


def _configure(args) -> LosConfig:
    config = LosConfig(args.config)
    if args.quiet:
        config.override("logging", verbose=False)
    config.override("analysis", eps=args.eps, max_steps=args.max_steps)
    config.override("simulation", seed=args.seed, max_steps=args.max_steps)
    config.override("synthesis", seed=args.seed,
                    rho=getattr(args, "rho", None), omega=getattr(args, "omega", None),
                    tol=getattr(args, "tol", None), restarts=getattr(args, "restarts", None))
    return config


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _configure(args)
        return args.handler(args, config)
    except (LosInputError, FileNotFoundError) as e:
        print(f"{e}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as e:
        print(f"{e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except BudgetExhaustedError as e:
        print(f"{e}", file=sys.stderr)
        return EXIT_BUDGET
    except KeyboardInterrupt:
        print("\n⚠️  処理が中断されました", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        print(f"\n❌ 予期しないエラー: {e}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
