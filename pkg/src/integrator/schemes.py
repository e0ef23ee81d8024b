# -*- coding: utf-8 -*-
"""
twogridcdm - 時間発展スキームモジュール

可変刻みBDF2コンパクト差分スキームの3つの時間発展:
- 完全非線形スキーム（各ステップでNewton反復）
- 2格子スキーム（粗格子で非線形、細格子で1回の線形化ソルブ）
- IMEX比較スキーム（非線形項を外挿）
と、それらを時間格子上で回す実行ドライバーを提供します。
"""

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from src.integrator.linsolve import LinearSolveConfig, LinearSolveError, solve
from src.integrator.timegrid import (
    AdaptiveConfig,
    AdaptiveIndicator,
    BDFKernels,
    TimeMesh,
    adaptive_next,
    bdf2_kernels,
    bdf_coefficients,
)
from src.numerics.compact_ops import (
    apply_A,
    apply_Lambda,
    assemble_step_matrix,
    boundary_rhs,
    from_unknowns,
    to_unknowns,
)
from src.numerics.grid import (
    Grid2D,
    GridError,
    GridFunction,
    NonFiniteValueError,
    TwoGridPair,
    export_snapshot_csv,
    inner_l2,
)
from src.numerics.interp import ProlongationPlan, build_plan, inject, prolongate
from src.problems.catalog import ProblemSpec
from src.problems.energy import discrete_energy
from src.utils.monitoring import RunMetrics, create_logger

logger = logging.getLogger(__name__)

DEFAULT_OVERFLOW_THRESHOLD = 1e6

RUN_CSV_HEADER = ["n", "t_n", "tau_n", "newton_iters", "linear_iters", "error_l2", "energy", "max_u"]


class SchemeKind(str, Enum):
    """時間発展スキームの種類"""
    NONLINEAR = "nonlinear"
    TWO_GRID = "two_grid"
    IMEX = "imex"


class SchemeError(RuntimeError):
    """スキーム関連エラーの基底クラス"""


class NewtonConvergenceError(SchemeError):
    """Newton反復が収束しない場合の例外"""

    def __init__(self, message: str, iterations: int, increment: float):
        super().__init__(message)
        self.iterations = iterations
        self.increment = increment


class DivergenceError(SchemeError):
    """解の爆発（NaN/Infまたは閾値超え）を検出した場合の例外"""

    def __init__(self, message: str, step: int, max_abs: float):
        super().__init__(message)
        self.step = step
        self.max_abs = max_abs


class StepFailure(SchemeError):
    """ステップ番号付きで伝播する失敗"""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"ステップ {step} で失敗しました: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class NewtonConfig:
    """Newton反復設定"""
    tol: float = 1e-13
    max_iters: int = 50

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"Newton許容誤差は正である必要があります: {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"Newton最大反復数は1以上が必要です: {self.max_iters}")


@dataclass(frozen=True)
class CutoffSpec:
    """切断関数の設定（解の範囲 [m, M] と余白 δ）"""
    m: float
    M: float
    delta: float

    def __post_init__(self):
        if not self.m < self.M:
            raise ValueError(f"m < M が必要です: {self.m}, {self.M}")
        if self.delta <= 0:
            raise ValueError(f"delta は正である必要があります: {self.delta}")

    @property
    def lower(self) -> float:
        return self.m - self.delta

    @property
    def upper(self) -> float:
        return self.M + self.delta


def cutoff_apply(f: Callable, spec: CutoffSpec, w: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    切断した非線形項 f̄(w)

    [m−δ, M+δ] の外では端点の値で一定になり、大域的にLipschitz連続です。
    """
    clipped = np.clip(w, spec.lower, spec.upper)
    value = f(clipped)
    return float(value) if np.ndim(value) == 0 else value


def with_cutoff(problem: ProblemSpec, spec: CutoffSpec) -> ProblemSpec:
    """f を f̄ に置き換えた問題（f̄' は範囲外で0）"""
    f, f_prime = problem.f, problem.f_prime

    def f_bar(u: np.ndarray) -> np.ndarray:
        return cutoff_apply(f, spec, u)

    def f_bar_prime(u: np.ndarray) -> np.ndarray:
        inside = (u >= spec.lower) & (u <= spec.upper)
        return np.where(inside, f_prime(np.clip(u, spec.lower, spec.upper)), 0.0)

    return dataclasses.replace(problem, f=f_bar, f_prime=f_bar_prime)


@dataclass
class SchemeState:
    """
    1つの格子上の時間発展状態

    current = u^{n−1}、previous = u^{n−2}（n = 1 では None）、times = t_0..t_{n−1}。
    """
    grid: Grid2D
    current: GridFunction
    previous: Optional[GridFunction] = None
    times: list[float] = field(default_factory=lambda: [0.0])

    def __post_init__(self):
        if self.current.grid != self.grid:
            raise GridError("状態の格子が一致しません")
        if self.previous is not None and self.previous.grid != self.grid:
            raise GridError("履歴の格子が一致しません")

    @classmethod
    def initial(cls, u0: GridFunction) -> "SchemeState":
        return cls(grid=u0.grid, current=u0.copy())

    @property
    def n(self) -> int:
        """次に計算するステップ番号"""
        return len(self.times)

    @property
    def t(self) -> float:
        return self.times[-1]

    @property
    def last_step(self) -> Optional[float]:
        return self.times[-1] - self.times[-2] if len(self.times) >= 2 else None

    @property
    def mesh(self) -> TimeMesh:
        return TimeMesh(np.array(self.times))

    @property
    def kernels(self) -> BDFKernels:
        return bdf2_kernels(self.mesh)

    def coefficients(self, t_next: float) -> tuple[float, float]:
        """t_next へのステップのBDF核 (b0, b1)"""
        tau_n = t_next - self.t
        if tau_n <= 0:
            raise SchemeError(f"時刻が増加していません: {self.t} → {t_next}")
        return bdf_coefficients(tau_n, self.last_step)

    def history(self, b0: float, b1: float) -> GridFunction:
        """履歴項 G = (b0−b1)u^{n−1} + b1 u^{n−2}（n = 1 では b0 u^0）"""
        if self.previous is None:
            return self.current * b0
        return GridFunction(self.grid, (b0 - b1) * self.current.values + b1 * self.previous.values)

    def predictor(self) -> GridFunction:
        """外挿 2u^{n−1} − u^{n−2}（n = 1 では u^0）"""
        if self.previous is None:
            return self.current.copy()
        return GridFunction(self.grid, 2.0 * self.current.values - self.previous.values)

    def advance(self, u_new: GridFunction, t_next: float) -> None:
        if u_new.grid != self.grid:
            raise GridError("新しい解の格子が一致しません")
        self.previous = self.current
        self.current = u_new
        self.times.append(float(t_next))


@dataclass
class StepResult:
    """1ステップの結果と統計"""
    solution: GridFunction
    newton_iters: int = 0
    linear_iters: int = 0
    linear_solves: int = 0
    increments: list[float] = field(default_factory=list)
    coarse: Optional[GridFunction] = None
    # 細格子での線形ソルブ数（2格子ステップでは常に1）
    fine_solves: int = 0


def _with_boundary(u: GridFunction, problem: ProblemSpec, t: float) -> GridFunction:
    """Dirichlet境界節点に psi(t) を設定した複製"""
    out = u.copy()
    boundary = problem.boundary(u.grid, t)
    if boundary is not None:
        mask = u.grid.boundary_mask()
        out.values[mask] = boundary.values[mask]
    return out


def _check_growth(u: GridFunction, step: int, threshold: float) -> None:
    max_abs = float(np.max(np.abs(u.values))) if np.all(np.isfinite(u.values)) else float("inf")
    if not max_abs <= threshold:
        raise DivergenceError(f"解が発散しました: ステップ {step}, max|u| = {max_abs:.3e}", step, max_abs)


def _linear_solve(
    grid: Grid2D,
    alpha: float,
    gamma: float,
    d: Optional[GridFunction],
    rhs_full: GridFunction,
    boundary: Optional[GridFunction],
    lin_cfg: LinearSolveConfig,
    guess: Optional[GridFunction],
    result: StepResult,
) -> GridFunction:
    """
    αA − γΛ − A∘diag(d) の線形系を解き、境界値込みの格子関数を返す

    rhs_full は全節点の右辺（未知数部分のみ使用）。
    """
    matrix = assemble_step_matrix(grid, alpha, gamma, d)
    rhs = to_unknowns(rhs_full)
    if boundary is not None:
        rhs = rhs + to_unknowns(boundary_rhs(grid, alpha, gamma, d, boundary))
    x0 = None if guess is None else to_unknowns(guess)
    outcome = solve(matrix, rhs, lin_cfg, x0=x0)
    result.linear_iters += outcome.iterations
    result.linear_solves += 1
    return from_unknowns(grid, outcome.x, boundary)


def nonlinear_step(
    state: SchemeState,
    problem: ProblemSpec,
    t_next: float,
    newton_cfg: Optional[NewtonConfig] = None,
    lin_cfg: Optional[LinearSolveConfig] = None,
    overflow_threshold: float = DEFAULT_OVERFLOW_THRESHOLD,
) -> StepResult:
    """
    完全非線形スキームの1ステップ

    R(u) = b0·A u − A G − cΛu − A f(u) − A g を Newton 法で0にします。
    補正方程式 (b0·A − cΛ − A∘diag(f'(u))) δ = −R を解き、‖δ‖∞ < tol で停止します。
    初期推定値は u^{n−1} です。

    Raises:
        NewtonConvergenceError: 最大反復数で収束しない場合
        DivergenceError: NaN/Inf または閾値超えを検出した場合
        LinearSolveError: 線形ソルバーが失敗した場合
    """
    newton_cfg = newton_cfg or NewtonConfig()
    lin_cfg = lin_cfg or LinearSolveConfig()
    grid = state.grid
    step = state.n
    b0, b1 = state.coefficients(t_next)
    # A を作用させる前の既知部分: G + g
    known = state.history(b0, b1) + problem.source(grid, t_next)

    u = _with_boundary(state.current, problem, t_next)
    result = StepResult(solution=u)
    increment = float("inf")

    for iteration in range(1, newton_cfg.max_iters + 1):
        fu = problem.f(u.values)
        residual = apply_A(GridFunction(grid, b0 * u.values - known.values - fu)).values
        residual = residual - problem.c * apply_Lambda(u).values
        d = GridFunction(grid, problem.f_prime(u.values))
        if not (np.all(np.isfinite(residual)) and np.all(np.isfinite(d.values))):
            raise DivergenceError(f"Newton反復中にNaN/Infを検出しました: ステップ {step}", step, float("inf"))
        delta = _linear_solve(
            grid, b0, problem.c, d, GridFunction(grid, -residual), None, lin_cfg, None, result
        )
        u = u + delta
        increment = float(np.max(np.abs(to_unknowns(delta))))
        result.increments.append(increment)
        result.newton_iters = iteration
        _check_growth(u, step, overflow_threshold)
        if increment < newton_cfg.tol:
            break
    else:
        raise NewtonConvergenceError(
            f"Newton反復が収束しませんでした: ステップ {step}, 増分 {increment:.3e}",
            iterations=newton_cfg.max_iters,
            increment=increment,
        )

    result.solution = u
    return result


def two_grid_step(
    coarse_state: SchemeState,
    fine_state: SchemeState,
    plan: ProlongationPlan,
    problem: ProblemSpec,
    t_next: float,
    newton_cfg: Optional[NewtonConfig] = None,
    lin_cfg: Optional[LinearSolveConfig] = None,
    overflow_threshold: float = DEFAULT_OVERFLOW_THRESHOLD,
    warm_start: bool = False,
) -> StepResult:
    """
    2格子スキームの1ステップ

    1. 粗格子で非線形スキームを解く
    2. 双三次補間 Π で細格子へ延長し、f を Πu_H の周りで線形化した
       b0·A u − cΛu − A∘diag(f'(Πu_H)) u = A[G + g + f(Πu_H) − f'(Πu_H)Πu_H]
       を1回だけ解く

    Returns:
        StepResult: solution が細格子解、coarse が粗格子解

    Raises:
        GridError: 状態の格子が計画と一致しない、または時刻がずれている場合
    """
    lin_cfg = lin_cfg or LinearSolveConfig()
    pair = plan.pair
    if coarse_state.grid != pair.coarse or fine_state.grid != pair.fine:
        raise GridError("2格子ステップの格子が延長計画と一致しません")
    if coarse_state.times != fine_state.times:
        raise GridError(f"粗細格子の時刻が同期していません: n = {coarse_state.n}, {fine_state.n}")

    coarse_result = nonlinear_step(
        coarse_state, problem, t_next, newton_cfg, lin_cfg, overflow_threshold
    )
    u_coarse = coarse_result.solution

    grid = fine_state.grid
    b0, b1 = fine_state.coefficients(t_next)
    lifted = prolongate(plan, u_coarse).values
    slope = problem.f_prime(lifted)
    known = fine_state.history(b0, b1).values + problem.source(grid, t_next).values
    rhs = apply_A(GridFunction(grid, known + problem.f(lifted) - slope * lifted))

    result = StepResult(
        solution=fine_state.current,
        newton_iters=coarse_result.newton_iters,
        linear_iters=coarse_result.linear_iters,
        linear_solves=coarse_result.linear_solves,
        increments=coarse_result.increments,
    )
    guess = fine_state.current if warm_start else None
    u_fine = _linear_solve(
        grid,
        b0,
        problem.c,
        GridFunction(grid, slope),
        rhs,
        problem.boundary(grid, t_next),
        lin_cfg,
        guess,
        result,
    )
    result.fine_solves = result.linear_solves - coarse_result.linear_solves
    _check_growth(u_fine, fine_state.n, overflow_threshold)
    result.solution = u_fine
    result.coarse = u_coarse
    return result


def imex_step(
    state: SchemeState,
    problem: ProblemSpec,
    t_next: float,
    lin_cfg: Optional[LinearSolveConfig] = None,
    overflow_threshold: float = DEFAULT_OVERFLOW_THRESHOLD,
    warm_start: bool = False,
) -> StepResult:
    """
    IMEXスキームの1ステップ

    b0·A u − cΛu = A[G + f(u*) + g]、u* = 2u^{n−1} − u^{n−2}（n = 1 では u^0）。

    Raises:
        DivergenceError: ‖u^n‖∞ が閾値を超えた、またはNaN/Infになった場合
    """
    lin_cfg = lin_cfg or LinearSolveConfig()
    grid = state.grid
    step = state.n
    b0, b1 = state.coefficients(t_next)
    predicted = state.predictor()
    _check_growth(predicted, step, overflow_threshold)
    known = state.history(b0, b1).values + problem.f(predicted.values) + problem.source(grid, t_next).values
    result = StepResult(solution=state.current)
    try:
        u = _linear_solve(
            grid,
            b0,
            problem.c,
            None,
            apply_A(GridFunction(grid, known)),
            problem.boundary(grid, t_next),
            lin_cfg,
            state.current if warm_start else None,
            result,
        )
    except LinearSolveError as e:
        if not np.all(np.isfinite(known)):
            raise DivergenceError(f"IMEX右辺が発散しました: ステップ {step}", step, float("inf")) from e
        raise
    _check_growth(u, step, overflow_threshold)
    result.solution = u
    return result


@dataclass
class StepRecord:
    """1ステップ分の記録"""
    n: int
    t_n: float
    tau_n: float
    newton_iters: int
    linear_iters: int
    error_l2: Optional[float]
    energy: Optional[float]
    max_u: float
    wall_time: float = 0.0

    def csv_row(self) -> list[str]:
        def fmt(value: Optional[float]) -> str:
            return "" if value is None else repr(float(value))

        return [
            str(self.n),
            fmt(self.t_n),
            fmt(self.tau_n),
            str(self.newton_iters),
            str(self.linear_iters),
            fmt(self.error_l2),
            fmt(self.energy),
            fmt(self.max_u),
        ]


@dataclass
class RunOptions:
    """実行ドライバーのオプション"""
    overflow_threshold: float = DEFAULT_OVERFLOW_THRESHOLD
    warm_start: bool = False
    # 2格子スキームでこの時刻までは細格子で非線形スキームを使う
    startup_time: float = 0.0
    snapshot_times: tuple[float, ...] = ()
    snapshot_dir: Optional[Path] = None
    csv_path: Optional[Path] = None
    track_error: bool = True


@dataclass
class RunReport:
    """実行結果のまとめ"""
    scheme: SchemeKind
    problem: str
    steps: list[StepRecord] = field(default_factory=list)
    solution: Optional[GridFunction] = None
    error_l2: Optional[float] = None
    diverged: bool = False
    diverged_step: Optional[int] = None
    wall_time: float = 0.0
    newton_iters: int = 0
    linear_iters: int = 0
    linear_solves: int = 0
    initial_energy: Optional[float] = None
    snapshots: dict[float, Path] = field(default_factory=dict)
    times: list[float] = field(default_factory=lambda: [0.0])

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def mesh(self) -> TimeMesh:
        return TimeMesh(np.array(self.times))

    @property
    def energies(self) -> list[float]:
        series = [] if self.initial_energy is None else [self.initial_energy]
        return series + [s.energy for s in self.steps if s.energy is not None]

    def to_csv(self, path: Union[str, Path]) -> Path:
        """ステップ記録を CSV に書き出す"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(RUN_CSV_HEADER)
            for record in self.steps:
                writer.writerow(record.csv_row())
        return path


def _error(problem: ProblemSpec, u: GridFunction, t: float) -> float:
    diff = u - problem.exact_on(u.grid, t)
    return float(np.sqrt(inner_l2(diff, diff)))


def _energy(problem: ProblemSpec, u: GridFunction) -> Optional[float]:
    if problem.epsilon is None or not u.grid.is_periodic:
        return None
    return discrete_energy(u, problem.epsilon)


class _StepPlanner:
    """固定格子または適応戦略から次の時刻を決める"""

    def __init__(self, final_time: float, mesh: Optional[TimeMesh], adaptive: Optional[AdaptiveConfig]):
        if (mesh is None) == (adaptive is None):
            raise SchemeError("時間格子と適応設定のどちらか一方を指定してください")
        self.mesh = mesh
        self.adaptive = adaptive
        self.final_time = mesh.final_time if mesh is not None else final_time

    def next_time(self, n: int, t: float, tau_prev: Optional[float], indicator_sq: float) -> Optional[float]:
        if self.mesh is not None:
            return float(self.mesh.times[n]) if n <= self.mesh.n_steps else None
        remaining = self.final_time - t
        if remaining <= 1e-12 * max(self.final_time, 1.0):
            return None
        if tau_prev is None:
            tau = self.adaptive.tau_min
        else:
            tau = adaptive_next(tau_prev, indicator_sq, self.adaptive)
        # 終端時刻にちょうど着地させる
        if tau >= remaining - 1e-12 * max(self.final_time, 1.0):
            return self.final_time
        return t + tau


def run(
    scheme: Union[SchemeKind, str],
    problem: ProblemSpec,
    grid: Optional[Grid2D] = None,
    pair: Optional[TwoGridPair] = None,
    mesh: Optional[TimeMesh] = None,
    adaptive: Optional[AdaptiveConfig] = None,
    newton_cfg: Optional[NewtonConfig] = None,
    lin_cfg: Optional[LinearSolveConfig] = None,
    options: Optional[RunOptions] = None,
    metrics: Optional[RunMetrics] = None,
) -> RunReport:
    """
    時間格子に沿ってスキームを実行

    Args:
        scheme: nonlinear | two_grid | imex
        problem: 問題設定
        grid: 単一格子スキーム用の格子
        pair: 2格子スキーム用の粗細格子ペア
        mesh: 固定時間格子（adaptive と排他）
        adaptive: 適応時間刻み設定（終端時刻は problem.final_time）
        newton_cfg, lin_cfg: ソルバー設定
        options: 実行オプション
        metrics: メトリクス収集先

    Returns:
        RunReport: 実行結果。発散は diverged=True として返す

    Raises:
        StepFailure: 発散以外の失敗（ステップ番号付き）
    """
    scheme = SchemeKind(scheme)
    options = options or RunOptions()
    metrics = metrics or RunMetrics()
    newton_cfg = newton_cfg or NewtonConfig()
    lin_cfg = lin_cfg or LinearSolveConfig()
    slog = create_logger(__name__)
    slog.set_context(scheme=scheme.value, problem=problem.name)

    if scheme == SchemeKind.TWO_GRID:
        if pair is None:
            raise SchemeError("2格子スキームには粗細格子ペアが必要です")
        grid = pair.fine
        plan = build_plan(pair)
    elif grid is None:
        raise SchemeError("格子が指定されていません")

    planner = _StepPlanner(problem.final_time, mesh, adaptive)
    fine_state = SchemeState.initial(problem.initial(grid))
    coarse_state = SchemeState.initial(inject(pair, fine_state.current)) if scheme == SchemeKind.TWO_GRID else None

    report = RunReport(scheme=scheme, problem=problem.name)
    report.initial_energy = _energy(problem, fine_state.current)
    track_error = options.track_error and problem.has_exact
    pending_snapshots = sorted(options.snapshot_times)
    while pending_snapshots and pending_snapshots[0] <= 0.0:
        target = pending_snapshots.pop(0)
        if options.snapshot_dir is not None:
            path = Path(options.snapshot_dir) / f"snapshot_{scheme.value}_t{target:g}.csv"
            report.snapshots[target] = export_snapshot_csv(fine_state.current, path)

    csv_file = None
    writer = None
    if options.csv_path is not None:
        Path(options.csv_path).parent.mkdir(parents=True, exist_ok=True)
        csv_file = open(options.csv_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(csv_file)
        writer.writerow(RUN_CSV_HEADER)

    started = time.perf_counter()
    indicator_sq = 0.0
    previous_energy = report.initial_energy
    try:
        while True:
            n = fine_state.n
            t_next = planner.next_time(n, fine_state.t, fine_state.last_step, indicator_sq)
            if t_next is None:
                break
            step_started = time.perf_counter()
            try:
                if scheme == SchemeKind.NONLINEAR or (
                    scheme == SchemeKind.TWO_GRID and fine_state.t < options.startup_time
                ):
                    result = nonlinear_step(
                        fine_state, problem, t_next, newton_cfg, lin_cfg, options.overflow_threshold
                    )
                    if coarse_state is not None:
                        result.coarse = inject(pair, result.solution)
                elif scheme == SchemeKind.TWO_GRID:
                    result = two_grid_step(
                        coarse_state,
                        fine_state,
                        plan,
                        problem,
                        t_next,
                        newton_cfg,
                        lin_cfg,
                        options.overflow_threshold,
                        options.warm_start,
                    )
                else:
                    result = imex_step(
                        fine_state, problem, t_next, lin_cfg, options.overflow_threshold, options.warm_start
                    )
            except DivergenceError as e:
                report.diverged = True
                report.diverged_step = e.step
                slog.warning("発散を検出", n=n, t=t_next, max_abs=e.max_abs)
                break
            except (SchemeError, LinearSolveError, GridError, NonFiniteValueError) as e:
                raise StepFailure(n, e) from e

            tau_n = t_next - fine_state.t
            u_old = fine_state.current
            fine_state.advance(result.solution, t_next)
            if coarse_state is not None:
                coarse_state.advance(result.coarse, t_next)

            energy = _energy(problem, result.solution)
            if adaptive is not None:
                if adaptive.indicator == AdaptiveIndicator.ENERGY and energy is not None:
                    indicator_sq = ((energy - previous_energy) / tau_n) ** 2
                else:
                    rate = (result.solution - u_old) * (1.0 / tau_n)
                    indicator_sq = inner_l2(rate, rate)
            previous_energy = energy

            record = StepRecord(
                n=n,
                t_n=t_next,
                tau_n=tau_n,
                newton_iters=result.newton_iters,
                linear_iters=result.linear_iters,
                error_l2=_error(problem, result.solution, t_next) if track_error else None,
                energy=energy,
                max_u=result.solution.max_abs(),
                wall_time=time.perf_counter() - step_started,
            )
            report.steps.append(record)
            report.newton_iters += result.newton_iters
            report.linear_iters += result.linear_iters
            report.linear_solves += result.linear_solves
            metrics.increment("steps")
            metrics.increment("linear_solves", result.linear_solves)
            metrics.increment("newton_iters", result.newton_iters)
            metrics.histogram("step_seconds", record.wall_time)
            metrics.histogram("linear_iters", result.linear_iters)
            if writer is not None:
                writer.writerow(record.csv_row())
            slog.debug(
                "ステップ完了",
                n=n,
                t=t_next,
                tau=tau_n,
                newton_iters=result.newton_iters,
                linear_iters=result.linear_iters,
                max_u=record.max_u,
                error_l2=record.error_l2,
                energy=energy,
            )

            while pending_snapshots and t_next >= pending_snapshots[0] - 1e-12:
                target = pending_snapshots.pop(0)
                if options.snapshot_dir is not None:
                    path = Path(options.snapshot_dir) / f"snapshot_{scheme.value}_t{target:g}.csv"
                    report.snapshots[target] = export_snapshot_csv(result.solution, path)
    finally:
        if csv_file is not None:
            csv_file.close()

    report.wall_time = time.perf_counter() - started
    report.times = list(fine_state.times)
    report.solution = fine_state.current
    if not report.diverged and problem.has_exact and report.steps:
        report.error_l2 = _error(problem, fine_state.current, fine_state.t)
    metrics.gauge("wall_seconds", report.wall_time)
    slog.info(
        "実行完了",
        steps=report.n_steps,
        t=fine_state.t,
        newton_iters=report.newton_iters,
        linear_iters=report.linear_iters,
        error_l2=report.error_l2,
        diverged=report.diverged,
        wall_seconds=round(report.wall_time, 3),
    )
    return report
