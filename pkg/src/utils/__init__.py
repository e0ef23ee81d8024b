# -*- coding: utf-8 -*-
"""
twogridcdm - ユーティリティモジュール

設定管理とモニタリングを提供します。
"""

from src.utils.config import Config, OutputConfig, SolverConfig
from src.utils.monitoring import RunMetrics, StructuredLogger, configure_logging, create_logger

__all__ = [
    "Config",
    "OutputConfig",
    "RunMetrics",
    "SolverConfig",
    "StructuredLogger",
    "configure_logging",
    "create_logger",
]
