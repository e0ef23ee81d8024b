# -*- coding: utf-8 -*-
"""
twogridcdm - モニタリングモジュール

計算実行向けのメトリクス収集、構造化ロギング、CLIのログ設定を提供します。
"""

import json
import logging
import threading
from datetime import datetime, timezone
from typing import Any, Optional

from rich.console import Console
from rich.logging import RichHandler


def configure_logging(level: str = "INFO", console: Optional[Console] = None) -> None:
    """
    ルートロガーに RichHandler を設定

    Args:
        level: ログレベル名
        console: 出力先コンソール（省略時は標準エラー）
    """
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[handler],
        force=True,
    )


class RunMetrics:
    """
    計算実行のメトリクス収集

    カウンター（ステップ数、線形ソルブ数、Newton反復数）と
    ヒストグラム（ステップ時間、反復数）を集計します。
    """

    def __init__(self, max_samples: int = 100_000):
        self._counters: dict[str, int] = {}
        self._gauges: dict[str, float] = {}
        self._histograms: dict[str, list[float]] = {}
        self._max_samples = max_samples
        self._lock = threading.Lock()

    def increment(self, name: str, value: int = 1) -> None:
        """カウンターをインクリメント"""
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + value

    def gauge(self, name: str, value: float) -> None:
        """ゲージを設定"""
        with self._lock:
            self._gauges[name] = value

    def histogram(self, name: str, value: float) -> None:
        """ヒストグラムに値を追加"""
        with self._lock:
            values = self._histograms.setdefault(name, [])
            values.append(value)
            if len(values) > self._max_samples:
                del values[: len(values) - self._max_samples]

    def counter(self, name: str) -> int:
        return self._counters.get(name, 0)

    def summary(self) -> dict:
        """すべてのメトリクスを集計"""
        with self._lock:
            result: dict[str, Any] = {
                "counters": dict(self._counters),
                "gauges": dict(self._gauges),
                "histograms": {},
            }
            for key, values in self._histograms.items():
                if values:
                    sorted_values = sorted(values)
                    result["histograms"][key] = {
                        "count": len(values),
                        "sum": sum(values),
                        "min": sorted_values[0],
                        "max": sorted_values[-1],
                        "avg": sum(values) / len(values),
                        "p50": sorted_values[len(values) // 2],
                        "p95": sorted_values[int(len(values) * 0.95)] if len(values) >= 20 else None,
                    }
            return result


class StructuredLogger:
    """構造化ロガー（JSON行）"""

    def __init__(self, name: str, level: Optional[str] = None):
        self.logger = logging.getLogger(name)
        if level:
            self.logger.setLevel(getattr(logging, level.upper(), logging.INFO))
        self._extra_fields: dict[str, Any] = {}

    def set_context(self, **kwargs) -> None:
        """ログコンテキストを設定"""
        self._extra_fields.update(kwargs)

    def _format_message(self, level: str, message: str, **kwargs) -> str:
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": level,
            "message": message,
            **self._extra_fields,
            **kwargs,
        }
        return json.dumps(log_entry, ensure_ascii=False, default=str)

    def info(self, message: str, **kwargs) -> None:
        if self.logger.isEnabledFor(logging.INFO):
            self.logger.info(self._format_message("INFO", message, **kwargs))

    def warning(self, message: str, **kwargs) -> None:
        self.logger.warning(self._format_message("WARNING", message, **kwargs))

    def error(self, message: str, **kwargs) -> None:
        self.logger.error(self._format_message("ERROR", message, **kwargs))

    def debug(self, message: str, **kwargs) -> None:
        # ステップごとに呼ばれるため、無効時はJSON化しない
        if self.logger.isEnabledFor(logging.DEBUG):
            self.logger.debug(self._format_message("DEBUG", message, **kwargs))


def create_logger(name: str, level: Optional[str] = None) -> StructuredLogger:
    """構造化ロガーを作成"""
    return StructuredLogger(name, level)
