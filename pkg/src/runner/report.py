# -*- coding: utf-8 -*-
"""
twogridcdm - レポートモジュール

収束表・比較表のCSV出力、収束次数の計算、gnuplotスクリプトの生成、
ターミナル向けの表表示を提供します。
"""

import csv
import logging
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from rich.console import Console
from rich.table import Table

from src.integrator.schemes import SchemeKind
from src.runner.schemas import AllenCahnSummary, ConvergenceRow, StudyKind

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"

CONVERGENCE_HEADER = [
    "scheme",
    "temporal",
    "n_time",
    "n_fine",
    "n_coarse",
    "steps",
    "max_ratio",
    "error",
    "order",
    "cpu_time",
    "tau_min",
]
# 再現性の比較から除外する列
TIMING_COLUMNS = {"cpu_time"}

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATE_DIR)),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
)


def convergence_order(e1: Optional[float], e2: Optional[float], rho: float) -> Optional[float]:
    """
    収束次数 log(e1/e2)/log(ρ)

    ρ は実際の解像度比。誤差が欠けている、または ρ = 1 の場合は None。
    """
    if e1 is None or e2 is None or e1 <= 0 or e2 <= 0 or rho <= 0 or rho == 1:
        return None
    if not (math.isfinite(e1) and math.isfinite(e2)):
        return None
    return math.log(e1 / e2) / math.log(rho)


def _resolution(row: ConvergenceRow, study: StudyKind) -> float:
    if study == StudyKind.SPACE:
        return float(row.n_fine)
    return float(row.steps or row.n_time or 0)


def compute_orders(rows: Sequence[ConvergenceRow], study: StudyKind) -> list[ConvergenceRow]:
    """系列（スキーム・時間格子）ごとに隣接行から収束次数を計算"""
    previous: dict[str, ConvergenceRow] = {}
    out: list[ConvergenceRow] = []
    for row in rows:
        before = previous.get(row.series)
        order = None
        if before is not None and not (row.diverged or before.diverged):
            rho = _resolution(row, study) / _resolution(before, study)
            order = convergence_order(before.error, row.error, rho)
        out.append(row.model_copy(update={"order": order}))
        previous[row.series] = row
    return out


def _fmt(value: Optional[float], spec: str) -> str:
    return "" if value is None else format(value, spec)


def convergence_record(row: ConvergenceRow) -> dict[str, str]:
    return {
        "scheme": row.scheme.value,
        "temporal": row.temporal.value,
        "n_time": "" if row.n_time is None else str(row.n_time),
        "n_fine": str(row.n_fine),
        "n_coarse": "" if row.n_coarse is None else str(row.n_coarse),
        "steps": str(row.steps),
        "max_ratio": _fmt(row.max_ratio, ".4f"),
        "error": row.error_label,
        "order": _fmt(row.order, ".2f"),
        "cpu_time": f"{row.cpu_time:.3f}",
        "tau_min": _fmt(row.tau_min, "g"),
    }


def write_convergence_csv(rows: Iterable[ConvergenceRow], path: Union[str, Path]) -> Path:
    """収束表を CSV に書き出す"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CONVERGENCE_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(convergence_record(row))
    logger.info(f"収束表を書き出しました: {path}")
    return path


def write_compare_csv(
    rows: Sequence[ConvergenceRow], schemes: Sequence[SchemeKind], path: Union[str, Path]
) -> Path:
    """
    3スキームの横並び比較表を書き出す

    列: temporal, n_time, tau_min, n_fine, error_<scheme>..., cpu_<scheme>...
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    keyed: dict[tuple, dict[SchemeKind, ConvergenceRow]] = {}
    for row in rows:
        keyed.setdefault((row.temporal.value, row.n_time, row.tau_min, row.n_fine), {})[row.scheme] = row
    header = ["temporal", "n_time", "tau_min", "n_fine"]
    header += [f"error_{s.value}" for s in schemes]
    header += [f"cpu_{s.value}" for s in schemes]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for (temporal, n_time, tau_min, n_fine), by_scheme in keyed.items():
            line = [temporal, "" if n_time is None else str(n_time), _fmt(tau_min, "g"), str(n_fine)]
            line += [by_scheme[s].error_label if s in by_scheme else "" for s in schemes]
            line += [f"{by_scheme[s].cpu_time:.3f}" if s in by_scheme else "" for s in schemes]
            writer.writerow(line)
    logger.info(f"比較表を書き出しました: {path}")
    return path


def write_allen_cahn_summary(summaries: Sequence[AllenCahnSummary], path: Union[str, Path]) -> Path:
    """Allen–Cahn 計算のまとめを CSV に書き出す"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["label", "steps", "final_time", "initial_energy", "final_energy",
              "energy_increase_max", "tau_min_used", "tau_max_used", "max_ratio", "cpu_time", "diverged"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(fields)
        for s in summaries:
            writer.writerow([
                s.label, s.steps, repr(s.final_time), repr(s.initial_energy), repr(s.final_energy),
                repr(s.energy_increase_max), repr(s.tau_min_used), repr(s.tau_max_used),
                f"{s.max_ratio:.4f}", f"{s.cpu_time:.3f}", s.diverged,
            ])
    return path


def render_convergence_script(
    csv_path: Path, study: StudyKind, series: Sequence[str], out_path: Path, title: str
) -> Path:
    """
    収束表の gnuplot スクリプトを生成

    Args:
        series: 描く系列名（"<scheme>_<temporal>"）
    """
    template = _env.get_template("convergence.gp.j2")
    text = template.render(
        title=title,
        csv=csv_path.name,
        output=csv_path.with_suffix(".png").name,
        xlabel="N_h" if study == StudyKind.SPACE else "N (time steps)",
        xcolumn=4 if study == StudyKind.SPACE else 6,
        series_labels=list(series),
    )
    out_path.write_text(text, encoding="utf-8")
    return out_path


def render_energy_script(runs: Sequence[tuple[str, Path]], out_path: Path, title: str) -> Path:
    """エネルギーと時間刻みの推移を描く gnuplot スクリプトを生成"""
    template = _env.get_template("energy.gp.j2")
    text = template.render(
        title=title,
        output=out_path.with_suffix(".png").name,
        runs=[{"label": label, "csv": csv_path.name} for label, csv_path in runs],
    )
    out_path.write_text(text, encoding="utf-8")
    return out_path


def print_convergence_table(rows: Sequence[ConvergenceRow], title: str, console: Optional[Console] = None) -> None:
    """収束表をターミナルに表示"""
    console = console or Console()
    table = Table(title=title)
    for column in CONVERGENCE_HEADER:
        table.add_column(column, justify="left" if column == "scheme" else "right")
    for row in rows:
        record = convergence_record(row)
        table.add_row(*(record[c] for c in CONVERGENCE_HEADER))
    console.print(table)
