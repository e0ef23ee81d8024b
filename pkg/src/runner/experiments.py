# -*- coding: utf-8 -*-
"""
twogridcdm - 実験ランナーモジュール

収束表（空間・時間）、3スキーム比較、Allen–Cahn 長時間計算、
時間格子生成、自己検査を実行します。
"""

import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import ValidationError

from src.integrator.schemes import RunOptions, RunReport, SchemeKind, run
from src.integrator.timegrid import (
    RATIO_BOUND,
    AdaptiveConfig,
    TimeMesh,
    bdf2_kernels,
    doc_kernels,
    make_rng,
    random_mesh,
    uniform_mesh,
)
from src.numerics.grid import build_two_grid, inner_l2
from src.numerics.interp import C3_L2_BOUND, C4_MAX_BOUND, build_plan, prolongate
from src.problems.catalog import ProblemSpec, get_problem
from src.runner.report import (
    compute_orders,
    render_convergence_script,
    render_energy_script,
    write_allen_cahn_summary,
    write_compare_csv,
    write_convergence_csv,
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
from src.utils.config import Config
from src.utils.monitoring import RunMetrics, create_logger

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """実験設定ファイルのエラー"""

    def __init__(self, message: str, path: Optional[Path] = None):
        super().__init__(message)
        self.path = path


@dataclass
class ExperimentOutcome:
    """実験の結果とファイル出力"""
    rows: list[ConvergenceRow] = field(default_factory=list)
    summaries: list[AllenCahnSummary] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)
    expect_divergence: bool = False

    @property
    def diverged(self) -> bool:
        return any(r.diverged for r in self.rows) or any(s.diverged for s in self.summaries)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    JSON 実験設定を読み込む

    Raises:
        ConfigError: ファイルが読めない、JSON が不正、または検証に失敗した場合
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"設定ファイルを読み込めません: {path}: {e}", path) from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"設定ファイルのJSONが不正です: {path}: {e}", path) from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"設定ファイルの検証に失敗しました: {path}\n{e}", path) from e


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None) -> ExperimentConfig:
    """CLI の --seed を初期値・時間格子のシードに反映"""
    if seed is None:
        return config
    temporal = config.temporal.model_copy(update={"seed": seed})
    return config.model_copy(update={"seed": seed, "temporal": temporal})


def build_problem(config: ExperimentConfig, settings: Config) -> ProblemSpec:
    """設定から問題を構築（終端時刻とシードを反映）"""
    params = dict(config.problem_params)
    if config.problem.startswith("ac_"):
        if config.seed is not None and config.problem == "ac_random":
            params.setdefault("seed", config.seed)
        if config.final_time is not None:
            params["final_time"] = config.final_time
    problem = get_problem(config.problem, debug=settings.debug, **params)
    if config.final_time is not None and problem.final_time != config.final_time:
        problem = dataclasses.replace(problem, final_time=config.final_time)
    return problem


def build_temporal(
    temporal: TemporalSpec, row: ResolutionRow, final_time: float
) -> tuple[Optional[TimeMesh], Optional[AdaptiveConfig]]:
    """行の時間格子（固定格子または適応設定）を構築"""
    if temporal.kind == TemporalKind.UNIFORM:
        return uniform_mesh(final_time, row.n_time), None
    if temporal.kind == TemporalKind.RANDOM:
        return random_mesh(final_time, row.n_time, temporal.seed), None
    adaptive = AdaptiveConfig(
        tau_min=row.tau_min if row.tau_min is not None else temporal.tau_min,
        tau_max=temporal.tau_max,
        eta=temporal.eta,
        r_max=temporal.r_max,
        indicator=temporal.indicator,
    )
    return None, adaptive


def _solver_settings(config: ExperimentConfig, settings: Config) -> Config:
    solver = settings.solver
    if config.newton_tol is not None:
        solver = dataclasses.replace(solver, newton_tol=config.newton_tol)
    if config.linear_method is not None:
        solver = dataclasses.replace(solver, linear_method=config.linear_method)
    return dataclasses.replace(settings, solver=solver)


def execute(
    config: ExperimentConfig,
    row: ResolutionRow,
    scheme: SchemeKind,
    settings: Config,
    options: Optional[RunOptions] = None,
    metrics: Optional[RunMetrics] = None,
) -> RunReport:
    """1行・1スキームの計算を実行"""
    settings = _solver_settings(config, settings)
    problem = build_problem(config, settings)
    mesh, adaptive = build_temporal(config.temporal_for(row), row, problem.final_time)
    grid = pair = None
    if scheme == SchemeKind.TWO_GRID:
        pair = problem.build_two_grid(config.coarse_size(row), config.ratio)
    else:
        grid = problem.build_grid(row.n_fine)
    options = options or RunOptions()
    options = dataclasses.replace(
        options,
        overflow_threshold=settings.solver.overflow_threshold,
        warm_start=settings.solver.warm_start,
        startup_time=config.startup_time,
    )
    logger.info(
        f"実行開始: {config.name} / {scheme.value} / N_h={row.n_fine}"
        + (f", N={row.n_time}" if row.n_time else "")
    )
    return run(
        scheme,
        problem,
        grid=grid,
        pair=pair,
        mesh=mesh,
        adaptive=adaptive,
        newton_cfg=settings.solver.newton(),
        lin_cfg=settings.solver.linear(check_residual=settings.debug),
        options=options,
        metrics=metrics,
    )


def to_convergence_row(
    config: ExperimentConfig, row: ResolutionRow, scheme: SchemeKind, report: RunReport
) -> ConvergenceRow:
    temporal = config.temporal_for(row)
    adaptive = temporal.kind == TemporalKind.ADAPTIVE
    max_ratio = report.mesh.max_ratio if len(report.times) >= 2 else None
    return ConvergenceRow(
        scheme=scheme,
        temporal=temporal.kind,
        n_time=None if adaptive else row.n_time,
        tau_min=(row.tau_min if row.tau_min is not None else temporal.tau_min) if adaptive else None,
        n_fine=row.n_fine,
        n_coarse=config.coarse_size(row) if scheme == SchemeKind.TWO_GRID else None,
        steps=report.n_steps,
        max_ratio=max_ratio,
        error=None if report.diverged else report.error_l2,
        cpu_time=report.wall_time,
        diverged=report.diverged,
        newton_iters=report.newton_iters,
        linear_iters=report.linear_iters,
    )


def _row_task(
    config: ExperimentConfig,
    index: int,
    scheme: SchemeKind,
    settings: Config,
    metrics: Optional[RunMetrics] = None,
) -> ConvergenceRow:
    """プロセスプールで実行する1行分の計算"""
    row = config.rows[index]
    report = execute(config, row, scheme, settings, metrics=metrics)
    return to_convergence_row(config, row, scheme, report)


def run_convergence(
    config: ExperimentConfig,
    settings: Config,
    threads: int = 1,
    metrics: Optional[RunMetrics] = None,
) -> list[ConvergenceRow]:
    """
    表の全行・全スキームを計算し、収束次数を付ける

    Args:
        config: 実験設定
        settings: ソルバー設定
        threads: 並列プロセス数（1なら逐次）
        metrics: メトリクス収集先（逐次実行時のみ集計）

    Returns:
        list[ConvergenceRow]: スキーム → 行の順に並んだ結果
    """
    tasks = [
        (index, scheme)
        for scheme in config.schemes
        for index, row in enumerate(config.rows)
        if scheme in config.schemes_for(row)
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_row_task, config, index, scheme, settings) for index, scheme in tasks]
            rows = [f.result() for f in futures]
    else:
        rows = [_row_task(config, index, scheme, settings, metrics) for index, scheme in tasks]
    rows = compute_orders(rows, config.study)
    slog = create_logger(__name__)
    slog.set_context(experiment=config.name, study=config.study.value)
    for row in rows:
        slog.info(
            "行完了",
            scheme=row.scheme.value,
            n_fine=row.n_fine,
            n_time=row.n_time,
            steps=row.steps,
            error=row.error_label,
            order=row.order,
            cpu_time=round(row.cpu_time, 3),
        )
    return rows


def _output_dir(config: ExperimentConfig, settings: Config, out: Optional[Path]) -> Path:
    base = out or (Path(config.output_dir) if config.output_dir else settings.output.output_dir)
    base.mkdir(parents=True, exist_ok=True)
    return base


def run_table(
    config: ExperimentConfig,
    settings: Config,
    study: Optional[StudyKind] = None,
    out: Optional[Path] = None,
    threads: int = 1,
    metrics: Optional[RunMetrics] = None,
) -> ExperimentOutcome:
    """収束表を計算して CSV（と gnuplot スクリプト）を書き出す"""
    if study is not None and study != config.study:
        config = config.model_copy(update={"study": study})
    out_dir = _output_dir(config, settings, out)
    rows = run_convergence(config, settings, threads, metrics)
    csv_path = write_convergence_csv(rows, out_dir / f"{config.name}.csv")
    files = [csv_path]
    if settings.output.emit_gnuplot:
        series = list(dict.fromkeys(r.series for r in rows))
        files.append(
            render_convergence_script(csv_path, config.study, series, out_dir / f"{config.name}.gp", config.name)
        )
    return ExperimentOutcome(rows=rows, files=files, expect_divergence=config.expect_divergence)


def run_compare(
    config: ExperimentConfig,
    settings: Config,
    out: Optional[Path] = None,
    threads: int = 1,
    metrics: Optional[RunMetrics] = None,
) -> ExperimentOutcome:
    """3スキームの横並び比較表を書き出す"""
    outcome = run_table(config, settings, out=out, threads=threads, metrics=metrics)
    out_dir = _output_dir(config, settings, out)
    outcome.files.append(write_compare_csv(outcome.rows, config.schemes, out_dir / f"{config.name}_compare.csv"))
    return outcome


def _run_label(scheme: SchemeKind, temporal: TemporalSpec, row: ResolutionRow) -> str:
    if temporal.kind == TemporalKind.ADAPTIVE:
        tau_min = row.tau_min if row.tau_min is not None else temporal.tau_min
        return f"{scheme.value}_adaptive_tmin{tau_min:g}"
    return f"{scheme.value}_{temporal.kind.value}_N{row.n_time}"


def summarize_allen_cahn(label: str, scheme: SchemeKind, report: RunReport) -> AllenCahnSummary:
    """エネルギー列と時間刻みの要約"""
    energies = np.array(report.energies, dtype=float)
    increase = float(np.max(np.diff(energies))) if energies.size >= 2 else 0.0
    steps = np.diff(np.array(report.times)) if len(report.times) >= 2 else np.array([0.0])
    return AllenCahnSummary(
        label=label,
        scheme=scheme,
        steps=report.n_steps,
        final_time=float(report.times[-1]),
        initial_energy=float(energies[0]) if energies.size else float("nan"),
        final_energy=float(energies[-1]) if energies.size else float("nan"),
        energy_increase_max=increase,
        tau_min_used=float(np.min(steps)),
        tau_max_used=float(np.max(steps)),
        max_ratio=report.mesh.max_ratio if len(report.times) >= 2 else 0.0,
        cpu_time=report.wall_time,
        diverged=report.diverged,
    )


def run_allen_cahn(
    config: ExperimentConfig,
    settings: Config,
    out: Optional[Path] = None,
    metrics: Optional[RunMetrics] = None,
) -> ExperimentOutcome:
    """
    Allen–Cahn 計算（各行 × スキーム）を実行し、エネルギー列とスナップショットを書き出す

    Raises:
        ConfigError: 周期境界の Allen–Cahn 問題でない場合
    """
    out_dir = _output_dir(config, settings, out)
    problem = build_problem(config, settings)
    if problem.epsilon is None or not problem.is_periodic:
        raise ConfigError(f"allen-cahn は周期境界の Allen–Cahn 問題が必要です: {config.problem}")

    outcome = ExperimentOutcome(expect_divergence=config.expect_divergence)
    energy_runs: list[tuple[str, Path]] = []
    for row in config.rows:
        temporal = config.temporal_for(row)
        for scheme in config.schemes_for(row):
            label = _run_label(scheme, temporal, row)
            csv_path = out_dir / f"{config.name}_{label}.csv"
            options = RunOptions(
                snapshot_times=tuple(config.snapshot_times),
                snapshot_dir=out_dir / "snapshots" / label,
                csv_path=csv_path,
            )
            report = execute(config, row, scheme, settings, options=options, metrics=metrics)
            summary = summarize_allen_cahn(label, scheme, report)
            summary.energy_csv = str(csv_path)
            summary.snapshots = [str(p) for p in report.snapshots.values()]
            outcome.summaries.append(summary)
            outcome.files.append(csv_path)
            energy_runs.append((label, csv_path))
            logger.info(
                f"{label}: {summary.steps} ステップ, エネルギー {summary.initial_energy:.6f} → "
                f"{summary.final_energy:.6f}, 最大増加 {summary.energy_increase_max:.2e}"
            )

    outcome.files.append(write_allen_cahn_summary(outcome.summaries, out_dir / f"{config.name}_summary.csv"))
    if settings.output.emit_gnuplot:
        outcome.files.append(render_energy_script(energy_runs, out_dir / f"{config.name}_energy.gp", config.name))
    return outcome


def generate_mesh(
    kind: TemporalKind, final_time: float, n_steps: int, seed: int, path: Union[str, Path]
) -> TimeMesh:
    """
    時間格子を生成して CSV に書き出す

    Raises:
        ConfigError: adaptive が指定された場合（解に依存するため事前生成できない）
    """
    if kind == TemporalKind.UNIFORM:
        mesh = uniform_mesh(final_time, n_steps)
    elif kind == TemporalKind.RANDOM:
        mesh = random_mesh(final_time, n_steps, seed)
    else:
        raise ConfigError("適応格子は解に依存するため事前生成できません")
    mesh.to_csv(path)
    logger.info(f"時間格子を書き出しました: {path} (N={mesh.n_steps}, max r={mesh.max_ratio:.4f})")
    return mesh


@dataclass
class SelfTestResult:
    """自己検査1項目の結果"""
    name: str
    passed: bool
    detail: str


def _check_kernels(seed: int) -> list[SelfTestResult]:
    mesh = random_mesh(1.0, 50, seed)
    kernels = bdf2_kernels(mesh)
    tau = mesh.steps
    identity = max(
        abs(kernels.b0[n] * tau[n] + kernels.b1[n] * tau[n - 1] - 1.0) for n in range(2, mesh.n_steps + 1)
    )
    doc = doc_kernels(kernels)
    theta = doc.matrix()
    b_matrix = np.zeros_like(theta)
    for m in range(1, mesh.n_steps + 1):
        b_matrix[m - 1, m - 1] = kernels.b0[m]
        if m >= 2:
            b_matrix[m - 1, m - 2] = kernels.b1[m]
    orthogonality = float(np.max(np.abs(theta @ b_matrix - np.eye(mesh.n_steps))))
    sums = float(np.max(np.abs(theta.sum(axis=1) - tau[1:])))
    positive = bool(np.all(theta[np.tril_indices(mesh.n_steps)] > 0))
    return [
        SelfTestResult("bdf2_consistency", identity < 1e-12, f"max|b0·τn + b1·τn−1 − 1| = {identity:.2e}"),
        SelfTestResult("doc_orthogonality", orthogonality < 1e-12 * max(1.0, float(np.max(theta))),
                       f"max|ΘB − I| = {orthogonality:.2e}"),
        SelfTestResult("doc_positive_sum", positive and sums < 1e-12,
                       f"θ > 0: {positive}, max|Σθ − τn| = {sums:.2e}"),
        SelfTestResult("random_mesh_ratio", mesh.max_ratio < RATIO_BOUND, f"max r = {mesh.max_ratio:.4f}"),
    ]


def _check_interpolation(seed: int, samples: int = 200) -> list[SelfTestResult]:
    rng = make_rng(seed)
    results = []
    for bc in ("dirichlet", "periodic"):
        pair = build_two_grid(8, 8, 3, 3, 1.0, 1.0, bc)
        plan = build_plan(pair)
        worst_l2 = worst_max = 0.0
        for _ in range(samples):
            values = rng.uniform(-1.0, 1.0, pair.coarse.shape)
            coarse = pair.coarse.zeros()
            coarse.values[...] = values
            if bc == "dirichlet":
                coarse.values[pair.coarse.boundary_mask()] = 0.0
            fine = prolongate(plan, coarse)
            worst_l2 = max(worst_l2, inner_l2(fine, fine) / max(inner_l2(coarse, coarse), 1e-300))
            worst_max = max(worst_max, fine.max_abs() / max(coarse.max_abs(), 1e-300))
        results.append(SelfTestResult(
            f"interp_bounds_{bc}",
            worst_l2 <= C3_L2_BOUND**2 and worst_max <= C4_MAX_BOUND,
            f"‖Πw‖²/‖w‖² ≤ {worst_l2:.3f}, ‖Πw‖∞/‖w‖∞ ≤ {worst_max:.3f}",
        ))

        if bc == "dirichlet":
            coarse = pair.coarse.sample(lambda x, y: x**3 - 2 * x * y**2 + y**3)
            xf, yf = pair.fine.coordinates()
            error = float(np.max(np.abs(prolongate(plan, coarse).values - (xf**3 - 2 * xf * yf**2 + yf**3))))
            results.append(SelfTestResult("interp_cubic_exact", error < 1e-12, f"max error = {error:.2e}"))
    return results


def selftest(seed: int = 0) -> list[SelfTestResult]:
    """核の代数と補間の有界性を小規模で検査"""
    results = _check_kernels(seed) + _check_interpolation(seed)
    for r in results:
        logger.log(logging.INFO if r.passed else logging.ERROR, f"{r.name}: {'OK' if r.passed else 'NG'} ({r.detail})")
    return results
