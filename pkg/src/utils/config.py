# -*- coding: utf-8 -*-
"""
twogridcdm - 設定管理モジュール

環境変数とソルバー・出力設定を管理します。
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from dotenv import load_dotenv

from src.integrator.linsolve import LinearMethod, LinearSolveConfig

if TYPE_CHECKING:
    from src.integrator.schemes import NewtonConfig

DEFAULT_OVERFLOW_THRESHOLD = 1e6
VALID_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


@dataclass
class SolverConfig:
    """ソルバー設定"""
    newton_tol: float = 1e-13
    newton_max_iters: int = 50
    linear_rel_tol: float = 1e-12
    linear_abs_tol: float = 1e-14
    linear_method: str = LinearMethod.KRYLOV.value
    overflow_threshold: float = DEFAULT_OVERFLOW_THRESHOLD
    # 前時刻の解を線形ソルバーの初期値に使う
    warm_start: bool = False

    def newton(self) -> "NewtonConfig":
        from src.integrator.schemes import NewtonConfig

        return NewtonConfig(tol=self.newton_tol, max_iters=self.newton_max_iters)

    def linear(self, check_residual: bool = False) -> LinearSolveConfig:
        return LinearSolveConfig(
            rel_tol=self.linear_rel_tol,
            abs_tol=self.linear_abs_tol,
            method=LinearMethod(self.linear_method),
            check_residual=check_residual,
        )


@dataclass
class OutputConfig:
    """出力設定"""
    output_dir: Path = field(default_factory=lambda: Path("outputs"))
    # gnuplot スクリプトを CSV と一緒に出力する
    emit_gnuplot: bool = True


@dataclass
class Config:
    """アプリケーション全体設定"""
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # デバッグモード（ソース項の自己検査と直接法の残差検査を有効化）
    debug: bool = False

    # ログ設定
    log_level: str = "INFO"

    @classmethod
    def from_env(cls, env_file: Optional[str] = None) -> "Config":
        """
        環境変数から設定を読み込む

        Args:
            env_file: .envファイルのパス（省略時は自動検索）

        Returns:
            Config: 設定インスタンス
        """
        if env_file:
            load_dotenv(env_file)
        else:
            load_dotenv()

        solver_config = SolverConfig(
            newton_tol=float(os.getenv("CDM_NEWTON_TOL", "1e-13")),
            newton_max_iters=int(os.getenv("CDM_NEWTON_MAX_ITERS", "50")),
            linear_rel_tol=float(os.getenv("CDM_LINEAR_REL_TOL", "1e-12")),
            linear_abs_tol=float(os.getenv("CDM_LINEAR_ABS_TOL", "1e-14")),
            linear_method=os.getenv("CDM_LINEAR_METHOD", LinearMethod.KRYLOV.value),
            overflow_threshold=float(os.getenv("CDM_OVERFLOW_THRESHOLD", str(DEFAULT_OVERFLOW_THRESHOLD))),
            warm_start=os.getenv("CDM_WARM_START", "false").lower() == "true",
        )

        output_config = OutputConfig(
            output_dir=Path(os.getenv("OUTPUT_DIR", "outputs")),
            emit_gnuplot=os.getenv("CDM_EMIT_GNUPLOT", "true").lower() == "true",
        )

        return cls(
            solver=solver_config,
            output=output_config,
            debug=os.getenv("DEBUG", "false").lower() == "true",
            log_level=os.getenv("LOG_LEVEL", "INFO"),
        )

    def validate(self) -> tuple[bool, list[str]]:
        """
        設定の妥当性を検証

        Returns:
            tuple[bool, list[str]]: (有効かどうか, エラーメッセージリスト)
        """
        errors: list[str] = []

        if self.solver.newton_tol <= 0:
            errors.append(f"Newton許容誤差は正である必要があります: {self.solver.newton_tol}")
        if self.solver.newton_max_iters < 1:
            errors.append(f"Newton最大反復数が不正です: {self.solver.newton_max_iters}")
        if self.solver.linear_rel_tol <= 0 or self.solver.linear_abs_tol <= 0:
            errors.append("線形ソルバーの許容誤差は正である必要があります")
        valid_methods = {m.value for m in LinearMethod}
        if self.solver.linear_method not in valid_methods:
            errors.append(f"無効な線形ソルバー: {self.solver.linear_method}。有効値: {sorted(valid_methods)}")
        if self.solver.overflow_threshold <= 0:
            errors.append(f"発散判定の閾値は正である必要があります: {self.solver.overflow_threshold}")
        if self.log_level.upper() not in VALID_LOG_LEVELS:
            errors.append(f"無効なログレベル: {self.log_level}")

        return len(errors) == 0, errors

    def ensure_output_dir(self) -> Path:
        """
        出力ディレクトリを作成し、パスを返す

        Returns:
            Path: 出力ディレクトリのパス
        """
        self.output.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output.output_dir
