"""
設定ファイル読み込みユーティリティ

config.yaml から設定を読み込み、CLI フラグによる上書きを受け付けます。
環境変数 LOS_CONFIG（.env でも可）で設定ファイルのパスを差し替えられます。

使用方法:
    config = LosConfig()                  # config.yaml（無ければデフォルト）
    config = LosConfig("my_config.yaml")
    config.override("synthesis", rho=100.0, omega=100.0)
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

from los_errors import LosInputError


DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    "paths": {
        "programs_dir": "programs",
        "output_dir": "outputs",
    },
    "numeric": {
        "prune_tol": 1e-15,
        "prob_tol": 1e-9,
        "stochastic_tol": 1e-12,
        "max_entries": 10_000_000,
        "norm": "frobenius",
    },
    "analysis": {
        "eps": 1e-12,
        "max_steps": 1_000_000,
    },
    "simulation": {
        "runs": 100_000,
        "seed": 0,
        "max_steps": 10_000,
        "n_jobs": 1,
        "chunk_size": 5000,
    },
    "synthesis": {
        "objective": "penalized",
        "rho": 1.0,
        "omega": 1.0,
        "tol": 1e-6,
        "restarts": 20,
        "seed": 0,
        "max_iter": 500,
        "fd_step": 1e-7,
        "armijo_c": 1e-4,
        "armijo_beta": 0.5,
        "initial_step": 1.0,
        "min_step": 1e-12,
        "polish": True,
        "threshold": 0.99,
        "n_jobs": 1,
    },
    "sweep": {
        "start": 0.0,
        "stop": 1.0,
        "step": 0.1,
        "n_jobs": 1,
    },
    "logging": {
        "verbose": True,
    },
}


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


class LosConfig:
    """
    ツールキットの設定を一元管理するクラス

    セクション:
    - paths: コーパスと出力先
    - numeric: 疎行列・確率の許容誤差、状態空間の上限、ノルム
    - analysis / simulation / synthesis / sweep: 各モジュールの既定値
    - logging: 進捗表示の有無
    """

    def __init__(self, config_path: Optional[str] = None):
        load_dotenv()
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        path = config_path or os.getenv("LOS_CONFIG", "config.yaml")
        self.config_path = Path(path)

        if self.config_path.exists():
            try:
                with open(self.config_path, "r", encoding="utf-8") as f:
                    loaded = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise LosInputError(f"❌ 設定ファイルの読み込みに失敗: {self.config_path}: {e}")
            if not isinstance(loaded, dict):
                raise LosInputError(f"❌ 設定ファイルの形式が不正です: {self.config_path}")
            _deep_merge(self.config, loaded)
        elif config_path is not None:
            raise FileNotFoundError(f"❌ 設定ファイルが見つかりません: {self.config_path}")
        else:
            print(f"⚠️  {self.config_path} が無いためデフォルト設定を使用します")

        norm = self.config["numeric"]["norm"]
        if norm not in ("frobenius", "spectral"):
            raise LosInputError(f"❌ numeric.norm は frobenius / spectral のいずれか: {norm}")

    def get_paths(self) -> Dict[str, Any]:
        return self.config["paths"]

    def get_numeric_config(self) -> Dict[str, Any]:
        return self.config["numeric"]

    def get_analysis_config(self) -> Dict[str, Any]:
        return self.config["analysis"]

    def get_simulation_config(self) -> Dict[str, Any]:
        return self.config["simulation"]

    def get_synthesis_config(self) -> Dict[str, Any]:
        return self.config["synthesis"]

    def get_sweep_config(self) -> Dict[str, Any]:
        return self.config["sweep"]

    @property
    def verbose(self) -> bool:
        return bool(self.config["logging"]["verbose"])

    def override(self, section: str, **values: Any) -> None:
        """CLI フラグで指定された値だけを上書き（None は無視）"""
        if section not in self.config:
            raise LosInputError(f"❌ 未知の設定セクション: {section}")
        for key, value in values.items():
            if value is not None:
                self.config[section][key] = value

    def print_summary(self) -> None:
        if not self.verbose:
            return
        print("\n" + "=" * 60)
        print("⚙️  設定サマリー")
        print("=" * 60)
        print(f"   設定ファイル: {self.config_path}")
        for section in ("numeric", "analysis", "simulation", "synthesis"):
            items = ", ".join(f"{k}={v}" for k, v in self.config[section].items())
            print(f"   [{section}] {items}")
