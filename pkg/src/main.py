#!/usr/bin/env python3
"""
twogridcdm - コマンドラインインターフェース

変数刻みBDF2・4次コンパクト差分法（非線形・2格子・IMEX）の
収束実験、スキーム比較、Allen–Cahn 計算、時間格子生成、自己検査を実行します。
"""

import logging
import sys
from pathlib import Path
from typing import Optional

import click
from rich.console import Console
from rich.table import Table

from src.runner.experiments import (
    ConfigError,
    ExperimentOutcome,
    apply_overrides,
    generate_mesh,
    load_config,
    run_allen_cahn,
    run_compare,
    run_table,
    selftest,
)
from src.runner.report import print_convergence_table
from src.runner.schemas import StudyKind, TemporalKind
from src.utils.config import Config
from src.utils.monitoring import RunMetrics, configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 2

console = Console()


class CliContext:
    """サブコマンド間で共有する設定"""

    def __init__(self, settings: Config, out: Optional[Path], seed: Optional[int], threads: int):
        self.settings = settings
        self.out = out
        self.seed = seed
        self.threads = threads
        self.metrics = RunMetrics()


def _exit_code(outcome: ExperimentOutcome) -> int:
    """発散の有無と期待から終了コードを決める"""
    if not outcome.diverged:
        return EXIT_OK
    if outcome.expect_divergence:
        console.print("[yellow]発散を検出しました（設定で想定済み）[/yellow]")
        return EXIT_DIVERGED
    console.print("[red]想定外の発散を検出しました[/red]")
    return EXIT_ERROR


def _print_metrics(metrics: RunMetrics) -> None:
    summary = metrics.summary()
    if not summary["counters"]:
        return
    table = Table(title="実行サマリー")
    table.add_column("項目")
    table.add_column("値", justify="right")
    for name, value in summary["counters"].items():
        table.add_row(name, str(value))
    step_seconds = summary["histograms"].get("step_seconds")
    if step_seconds:
        table.add_row("step_seconds (avg)", f"{step_seconds['avg']:.4f}")
        table.add_row("step_seconds (max)", f"{step_seconds['max']:.4f}")
    console.print(table)


def _print_files(outcome: ExperimentOutcome) -> None:
    for path in outcome.files:
        console.print(f"  出力: {path}")


@click.group()
@click.option("--out", "out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="出力ディレクトリ（設定ファイルの値より優先）")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="乱数シード（時間格子・初期値）")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="収束表の並列プロセス数")
@click.option("--log-level", default=None, help="ログレベル（LOG_LEVEL より優先）")
@click.option("--env-file", type=click.Path(dir_okay=False), default=None, help=".env ファイル")
@click.pass_context
def cli(
    ctx: click.Context,
    out: Optional[Path],
    seed: Optional[int],
    threads: int,
    log_level: Optional[str],
    env_file: Optional[str],
) -> None:
    """twogridcdm - 2格子コンパクト差分法の数値実験ツール"""
    settings = Config.from_env(env_file)
    if log_level:
        settings.log_level = log_level
    valid, errors = settings.validate()
    if not valid:
        for error in errors:
            console.print(f"[red]設定エラー: {error}[/red]")
        raise click.exceptions.Exit(EXIT_ERROR)
    configure_logging(settings.log_level)
    ctx.obj = CliContext(settings, out, seed, threads)


def _load(ctx: CliContext, path: Path):
    return apply_overrides(load_config(path), ctx.seed)


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="実験設定 JSON",
)


def _convergence(ctx: CliContext, config_path: Path, study: StudyKind) -> int:
    config = _load(ctx, config_path)
    outcome = run_table(config, ctx.settings, study=study, out=ctx.out, threads=ctx.threads, metrics=ctx.metrics)
    print_convergence_table(outcome.rows, config.name, console)
    _print_metrics(ctx.metrics)
    _print_files(outcome)
    return _exit_code(outcome)


@cli.command("converge-space")
@config_option
@click.pass_obj
def converge_space(ctx: CliContext, config_path: Path) -> int:
    """空間方向の収束表を計算"""
    return _convergence(ctx, config_path, StudyKind.SPACE)


@cli.command("converge-time")
@config_option
@click.pass_obj
def converge_time(ctx: CliContext, config_path: Path) -> int:
    """時間方向の収束表を計算"""
    return _convergence(ctx, config_path, StudyKind.TIME)


@cli.command("compare")
@config_option
@click.pass_obj
def compare(ctx: CliContext, config_path: Path) -> int:
    """非線形・2格子・IMEX スキームを比較"""
    config = _load(ctx, config_path)
    outcome = run_compare(config, ctx.settings, out=ctx.out, threads=ctx.threads, metrics=ctx.metrics)
    print_convergence_table(outcome.rows, config.name, console)
    _print_metrics(ctx.metrics)
    _print_files(outcome)
    return _exit_code(outcome)


@cli.command("allen-cahn")
@config_option
@click.pass_obj
def allen_cahn(ctx: CliContext, config_path: Path) -> int:
    """周期 Allen–Cahn 方程式を長時間計算"""
    config = _load(ctx, config_path)
    outcome = run_allen_cahn(config, ctx.settings, out=ctx.out, metrics=ctx.metrics)
    table = Table(title=config.name)
    for column in ("label", "steps", "E(0)", "E(T)", "max ΔE", "τ min", "τ max", "cpu"):
        table.add_column(column, justify="left" if column == "label" else "right")
    for s in outcome.summaries:
        table.add_row(
            s.label,
            str(s.steps),
            f"{s.initial_energy:.6f}",
            f"{s.final_energy:.6f}",
            f"{s.energy_increase_max:.2e}",
            f"{s.tau_min_used:.2e}",
            f"{s.tau_max_used:.2e}",
            f"{s.cpu_time:.2f}",
        )
    console.print(table)
    _print_metrics(ctx.metrics)
    _print_files(outcome)
    return _exit_code(outcome)


@cli.command("mesh-gen")
@click.option("--kind", type=click.Choice([TemporalKind.UNIFORM.value, TemporalKind.RANDOM.value]),
              default=TemporalKind.RANDOM.value, show_default=True)
@click.option("--final-time", "-T", type=click.FloatRange(min=0, min_open=True), required=True)
@click.option("--steps", "-N", type=click.IntRange(min=1), required=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="出力CSV（省略時は --out 配下）")
@click.pass_obj
def mesh_gen(ctx: CliContext, kind: str, final_time: float, steps: int, output: Optional[Path]) -> int:
    """時間格子を生成して CSV に書き出す"""
    if output is None:
        base = ctx.out or ctx.settings.ensure_output_dir()
        base.mkdir(parents=True, exist_ok=True)
        output = base / f"mesh_{kind}_N{steps}.csv"
    mesh = generate_mesh(TemporalKind(kind), final_time, steps, ctx.seed or 0, output)
    console.print(f"時間格子: N={mesh.n_steps}, 最大比 r={mesh.max_ratio:.4f}, 最大刻み τ={mesh.max_step:.4e}")
    console.print(f"  出力: {output}")
    return EXIT_OK


@cli.command("selftest")
@click.pass_obj
def selftest_command(ctx: CliContext) -> int:
    """核の代数と補間の有界性を検査"""
    results = selftest(ctx.seed or 0)
    table = Table(title="selftest")
    table.add_column("項目")
    table.add_column("結果")
    table.add_column("詳細")
    for r in results:
        table.add_row(r.name, "[green]OK[/green]" if r.passed else "[red]NG[/red]", r.detail)
    console.print(table)
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def main(argv: Optional[list[str]] = None) -> int:
    """
    メインエントリーポイント

    Returns:
        終了コード（0: 成功、1: エラー、2: 想定された発散）
    """
    try:
        result = cli.main(args=argv, prog_name="twogridcdm", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_ERROR
    except click.exceptions.Abort:
        return EXIT_ERROR
    except ConfigError as e:
        console.print(f"[red]{e}[/red]")
        return EXIT_ERROR
    except Exception as e:
        logger.exception(f"実行エラー: {e}")
        return EXIT_ERROR
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
