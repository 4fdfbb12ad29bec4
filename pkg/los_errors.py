"""
確率的 while プログラム LOS ツールキットの例外定義

入力エラー（終了コード 1）、数値的な非収束（終了コード 2）、
探索予算の枯渇（終了コード 3）を CLI で区別できるように、
組み込み例外を継承した小さな階層を用意しています。
"""


class LosError(Exception):
    """ツールキット全体の基底例外"""


class LosInputError(LosError, ValueError):
    """プログラム・行列・設定など入力側の誤り"""


class ParseError(LosInputError):
    """構文エラー（行・列つき）"""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        if line:
            message = f"{line}行{column}列: {message}"
        super().__init__(f"❌ 構文エラー {message}")


class DomainError(LosInputError):
    """値が変数の宣言ドメインの外にある"""


class ProbabilityError(LosInputError):
    """確率が [0,1] の外、または合計が 1 にならない"""


class UnboundParameterError(LosInputError):
    """#name パラメータに値が束縛されていない"""


class DimensionError(LosInputError):
    """行列・ベクトルの次元不一致"""


class StateSpaceBlowupError(LosInputError):
    """状態空間が設定上限を超えた"""


class RankDeficientError(LosInputError):
    """抽象化行列が列フルランクでない"""


class ConvergenceError(LosError, RuntimeError):
    """反復が maxSteps 以内に収束しなかった"""


class BudgetExhaustedError(LosError, RuntimeError):
    """最適化の予算内で目標値に届かなかった"""


class SimulationTimeout(LosError, RuntimeError):
    """モンテカルロ実行が maxSteps 以内に停止ラベルへ到達しなかった"""

    def __init__(self, message: str, steps: int = 0):
        self.steps = steps
        super().__init__(message)
