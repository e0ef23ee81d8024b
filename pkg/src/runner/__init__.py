# -*- coding: utf-8 -*-
"""
twogridcdm - 実験ランナーパッケージ

JSON 実験設定の読み込み、収束表・比較表・Allen–Cahn 計算の実行とレポート出力を提供します。
"""

from src.runner.experiments import (
    ConfigError,
    ExperimentOutcome,
    SelfTestResult,
    generate_mesh,
    load_config,
    run_allen_cahn,
    run_compare,
    run_table,
    selftest,
)
from src.runner.schemas import (
    AllenCahnSummary,
    ConvergenceRow,
    ExperimentConfig,
    ResolutionRow,
    StudyKind,
    TemporalKind,
    TemporalSpec,
)

__all__ = [
    "AllenCahnSummary",
    "ConfigError",
    "ConvergenceRow",
    "ExperimentConfig",
    "ExperimentOutcome",
    "ResolutionRow",
    "SelfTestResult",
    "StudyKind",
    "TemporalKind",
    "TemporalSpec",
    "generate_mesh",
    "load_config",
    "run_allen_cahn",
    "run_compare",
    "run_table",
    "selftest",
]
