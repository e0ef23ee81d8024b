# -*- coding: utf-8 -*-
"""
twogridcdm - 時間発展スキームのテスト
"""

import csv
import dataclasses

import numpy as np
import pytest

from src.integrator.linsolve import LinearSolveConfig
from src.integrator.schemes import (
    CutoffSpec,
    DivergenceError,
    NewtonConfig,
    NewtonConvergenceError,
    RUN_CSV_HEADER,
    RunOptions,
    SchemeError,
    SchemeKind,
    SchemeState,
    StepFailure,
    cutoff_apply,
    imex_step,
    nonlinear_step,
    run,
    two_grid_step,
    with_cutoff,
)
from src.integrator.timegrid import AdaptiveConfig, random_mesh, uniform_mesh
from src.numerics.compact_ops import assemble_step_matrix, to_unknowns
from src.numerics.grid import GridError
from src.numerics.interp import build_plan, inject
from src.problems.catalog import EIGENVALUE, ProblemSpec, allen_cahn, get_problem
from src.runner.report import convergence_record
from src.runner.schemas import ConvergenceRow


def _sine(x, y):
    return np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)


def _zero(x, y, t):
    return np.zeros_like(x)


def _problem(f, f_prime, g=_zero, u0=None, final_time=1.0, exact=None, c=1.0) -> ProblemSpec:
    return ProblemSpec(
        name="test",
        c=c,
        f=f,
        f_prime=f_prime,
        g=g,
        u0=u0 or (lambda x, y: np.zeros_like(x)),
        final_time=final_time,
        psi=_zero,
        exact=exact,
    )


@pytest.fixture
def cubic_zero():
    """u − u³、初期値0、境界値0（0が不動点）"""
    return _problem(lambda u: u - u**3, lambda u: 1.0 - 3.0 * u**2)


@pytest.fixture
def linear_problem():
    """f(u) = u/2 の線形問題"""
    return _problem(
        lambda u: 0.5 * u,
        lambda u: 0.5 * np.ones_like(u),
        u0=lambda x, y: _sine(x, y) + 0.3 * np.sin(np.pi * x) * np.sin(3 * np.pi * y),
        final_time=0.2,
    )


@pytest.fixture
def stationary():
    """時間に依存しない厳密解 S(x, y)"""
    return _problem(
        lambda u: np.zeros_like(u),
        lambda u: np.zeros_like(u),
        g=lambda x, y, t: EIGENVALUE * _sine(x, y),
        u0=_sine,
        exact=lambda x, y, t: _sine(x, y),
    )


class TestCutoff:
    """切断関数のテスト"""

    def test_values(self):
        """範囲外では端点の値になること"""
        spec = CutoffSpec(m=-1.0, M=1.0, delta=0.1)

        def f(u):
            return u - u**3

        assert cutoff_apply(f, spec, 2.0) == pytest.approx(-0.231)
        assert cutoff_apply(f, spec, -5.0) == pytest.approx(0.231)
        assert cutoff_apply(f, spec, 0.5) == pytest.approx(0.375)

    def test_invalid(self):
        """m ≥ M や δ ≤ 0 はエラーになること"""
        with pytest.raises(ValueError):
            CutoffSpec(m=1.0, M=1.0, delta=0.1)
        with pytest.raises(ValueError):
            CutoffSpec(m=-1.0, M=1.0, delta=0.0)

    def test_with_cutoff_derivative(self, cubic_zero):
        """切断後の導関数は範囲外で0になること"""
        problem = with_cutoff(cubic_zero, CutoffSpec(m=-1.0, M=1.0, delta=0.1))
        u = np.array([-2.0, 0.0, 1.05, 3.0])
        assert np.allclose(problem.f_prime(u), [0.0, 1.0, 1.0 - 3.0 * 1.05**2, 0.0])
        assert np.allclose(problem.f(u)[[0, 3]], [0.231, -0.231])


class TestSchemeState:
    """SchemeState のテスト"""

    def test_history_first_step(self):
        """最初のステップでは BDF1 の履歴になること"""
        grid = get_problem("case1").build_grid(8)
        state = SchemeState.initial(grid.sample(_sine))
        b0, b1 = state.coefficients(0.1)
        assert b0 == pytest.approx(10.0)
        assert b1 == 0.0
        assert np.allclose(state.history(b0, b1).values, 10.0 * state.current.values)
        assert np.allclose(state.predictor().values, state.current.values)

    def test_predictor_extrapolates(self):
        """2ステップ目以降は線形外挿になること"""
        grid = get_problem("case1").build_grid(8)
        state = SchemeState.initial(grid.sample(_sine))
        state.advance(state.current * 2.0, 0.1)
        assert state.n == 2
        assert state.last_step == pytest.approx(0.1)
        assert np.allclose(state.predictor().values, 3.0 * state.previous.values)

    def test_time_must_increase(self):
        """時刻が増加しなければエラーになること"""
        grid = get_problem("case1").build_grid(8)
        state = SchemeState.initial(grid.sample(_sine))
        with pytest.raises(SchemeError):
            state.coefficients(0.0)


class TestSteps:
    """1ステップ関数のテスト"""

    def test_zero_fixed_point(self, cubic_zero):
        """0は全スキームで厳密に保たれること"""
        pair = cubic_zero.build_two_grid(4, 2)
        fine = SchemeState.initial(cubic_zero.initial(pair.fine))
        coarse = SchemeState.initial(inject(pair, fine.current))
        assert not np.any(nonlinear_step(fine, cubic_zero, 0.1).solution.values)
        assert not np.any(imex_step(fine, cubic_zero, 0.1).solution.values)
        result = two_grid_step(coarse, fine, build_plan(pair), cubic_zero, 0.1)
        assert not np.any(result.solution.values)

    def test_two_grid_single_fine_solve(self):
        """2格子ステップは細格子で線形ソルブを1回だけ行うこと"""
        problem = get_problem("case1")
        pair = problem.build_two_grid(6, 2)
        fine = SchemeState.initial(problem.initial(pair.fine))
        coarse = SchemeState.initial(inject(pair, fine.current))
        result = two_grid_step(coarse, fine, build_plan(pair), problem, 0.05)
        assert result.fine_solves == 1
        assert result.linear_solves == result.newton_iters + 1
        assert result.coarse.grid == pair.coarse
        assert result.solution.grid == pair.fine

    def test_two_grid_requires_synchronised_states(self):
        """粗細格子の時刻がずれているとエラーになること"""
        problem = get_problem("case1")
        pair = problem.build_two_grid(4, 2)
        fine = SchemeState.initial(problem.initial(pair.fine))
        coarse = SchemeState.initial(inject(pair, fine.current))
        fine.advance(fine.current.copy(), 0.05)
        with pytest.raises(GridError):
            two_grid_step(coarse, fine, build_plan(pair), problem, 0.1)

    def test_newton_converges_quadratically(self):
        """Newton増分が急速に減少すること"""
        problem = get_problem("case1")
        state = SchemeState.initial(problem.initial(problem.build_grid(8)))
        result = nonlinear_step(state, problem, 0.1)
        assert result.increments[-1] < 1e-13
        assert result.newton_iters <= 8

    def test_newton_quadratic_tail(self):
        """停止直前の増分が sqrt(tol) 程度まで落ちていること"""
        problem = get_problem("case1")
        state = SchemeState.initial(problem.initial(problem.build_grid(8)))
        cfg = NewtonConfig()
        increments = nonlinear_step(state, problem, 0.1, cfg).increments
        assert len(increments) >= 2
        assert increments[-1] < cfg.tol
        assert increments[-2] < 10.0 * np.sqrt(cfg.tol)

    @pytest.mark.parametrize("n", [5, 6, 7])
    def test_newton_matches_fixed_point(self, n):
        """Newton解が減衰付き不動点反復で解いた非線形系の解と一致すること"""
        problem = _problem(
            lambda u: u - u**3,
            lambda u: 1.0 - 3.0 * u**2,
            u0=lambda x, y: 0.5 * _sine(x, y) + 0.2 * np.sin(np.pi * x) * np.sin(np.pi * y),
        )
        grid = problem.build_grid(n)
        state = SchemeState.initial(problem.initial(grid))
        tau = 0.01
        result = nonlinear_step(
            state, problem, tau, lin_cfg=LinearSolveConfig(method="dense_direct")
        )

        # b0·A u − cΛu = A(b0·u⁰ + f(u)) を u = M⁻¹A(b0·u⁰ + f(u)) として反復
        b0 = 1.0 / tau
        m = assemble_step_matrix(grid, b0, problem.c).matrix.toarray()
        a = assemble_step_matrix(grid, 1.0, 0.0).matrix.toarray()
        u_prev = to_unknowns(state.current)
        u = u_prev.copy()
        for _ in range(500):
            target = np.linalg.solve(m, a @ (b0 * u_prev + problem.f(u)))
            u_next = 0.2 * u + 0.8 * target
            if np.max(np.abs(u_next - u)) < 1e-15:
                u = u_next
                break
            u = u_next

        assert u.size == (n - 1) ** 2
        assert np.max(np.abs(to_unknowns(result.solution) - u)) <= 1e-12

    def test_newton_iteration_limit(self):
        """反復上限で収束しなければ例外になること"""
        problem = get_problem("case1")
        state = SchemeState.initial(problem.initial(problem.build_grid(8)))
        with pytest.raises(NewtonConvergenceError) as exc_info:
            nonlinear_step(state, problem, 0.1, NewtonConfig(max_iters=1))
        assert exc_info.value.iterations == 1

    def test_imex_divergence(self):
        """強い非線形問題で粗い刻みの IMEX は DivergenceError を送出すること"""
        problem = get_problem("case3")
        state = SchemeState.initial(problem.initial(problem.build_grid(8)))
        tau = np.pi / 4
        with pytest.raises(DivergenceError) as exc_info:
            for k in range(1, 5):
                result = imex_step(state, problem, tau * k)
                state.advance(result.solution, tau * k)
        assert exc_info.value.max_abs > 1e6
        assert 1 <= exc_info.value.step <= 4


class TestRun:
    """実行ドライバーのテスト"""

    def test_linear_two_grid_matches_nonlinear(self, linear_problem):
        """線形の f では2格子解と非線形解が一致すること"""
        pair = linear_problem.build_two_grid(4, 3)
        mesh = uniform_mesh(0.2, 8)
        lin_cfg = LinearSolveConfig(method="sparse_direct")
        nonlinear = run("nonlinear", linear_problem, grid=pair.fine, mesh=mesh, lin_cfg=lin_cfg)
        two_grid = run("two_grid", linear_problem, pair=pair, mesh=mesh, lin_cfg=lin_cfg)
        assert np.allclose(nonlinear.solution.values, two_grid.solution.values, atol=1e-10)

    @pytest.mark.parametrize("scheme", list(SchemeKind))
    def test_stationary_solution(self, stationary, scheme):
        """定常解は全スキームで4次精度の誤差に留まること"""
        pair = stationary.build_two_grid(4, 4)
        report = run(scheme, stationary, grid=pair.fine, pair=pair, mesh=uniform_mesh(1.0, 10))
        assert not report.diverged
        assert report.n_steps == 10
        assert report.error_l2 < 1e-3

    def test_time_convergence(self):
        """時間刻みを半分にすると誤差がおよそ1/4になること"""
        problem = get_problem("sec62")
        grid = problem.build_grid(16)
        errors = [
            run("nonlinear", problem, grid=grid, mesh=uniform_mesh(1.0, n)).error_l2 for n in (8, 16)
        ]
        assert errors[0] / errors[1] > 3.0

    def test_random_mesh_run(self):
        """ランダム時間格子でも終端時刻まで進むこと"""
        problem = get_problem("sec62")
        mesh = random_mesh(1.0, 10, seed=3)
        report = run("imex", problem, grid=problem.build_grid(8), mesh=mesh)
        assert report.n_steps == 10
        assert report.times[-1] == pytest.approx(1.0)
        assert report.mesh.max_ratio == pytest.approx(mesh.max_ratio)

    def test_imex_divergence_is_reported(self):
        """発散は例外ではなく diverged として報告され、誤差は Inf と表示されること"""
        problem = get_problem("case3")
        report = run("imex", problem, grid=problem.build_grid(8), mesh=uniform_mesh(np.pi, 4))
        assert report.diverged
        assert report.diverged_step is not None
        assert report.n_steps == report.diverged_step - 1
        assert report.error_l2 is None
        row = ConvergenceRow(scheme="imex", n_fine=8, n_time=4, steps=report.n_steps, diverged=report.diverged)
        assert convergence_record(row)["error"] == "Inf"

    def test_step_failure_carries_step(self):
        """発散以外の失敗はステップ番号付きで伝播すること"""
        problem = get_problem("case1")
        with pytest.raises(StepFailure) as exc_info:
            run(
                "nonlinear",
                problem,
                grid=problem.build_grid(8),
                mesh=uniform_mesh(np.pi, 4),
                newton_cfg=NewtonConfig(max_iters=1),
            )
        assert exc_info.value.step == 1
        assert isinstance(exc_info.value.cause, NewtonConvergenceError)

    def test_adaptive_lands_on_final_time(self):
        """適応刻みは終端時刻にちょうど着地し、刻み比を守ること"""
        problem = get_problem("sec62")
        adaptive = AdaptiveConfig(tau_min=0.01, tau_max=0.2, eta=100.0)
        report = run("nonlinear", problem, grid=problem.build_grid(8), adaptive=adaptive)
        assert report.times[0] == 0.0
        assert report.times[1] == pytest.approx(0.01)
        assert report.times[-1] == problem.final_time
        steps = np.diff(report.times)
        assert np.all(steps[1:] <= adaptive.r_max * steps[:-1] + 1e-14)
        assert np.all(steps <= adaptive.tau_max + 1e-14)

    def test_mesh_and_adaptive_are_exclusive(self):
        """時間格子と適応設定の両方を指定するとエラーになること"""
        problem = get_problem("sec62")
        with pytest.raises(SchemeError):
            run(
                "nonlinear",
                problem,
                grid=problem.build_grid(8),
                mesh=uniform_mesh(1.0, 4),
                adaptive=AdaptiveConfig(tau_min=0.01, tau_max=0.1, eta=1.0),
            )

    def test_two_grid_requires_pair(self):
        """2格子スキームは格子ペアが必要なこと"""
        problem = get_problem("sec62")
        with pytest.raises(SchemeError):
            run("two_grid", problem, grid=problem.build_grid(8), mesh=uniform_mesh(1.0, 4))

    def test_csv_stream(self, tmp_path):
        """ステップ記録が CSV に逐次書き出されること"""
        problem = get_problem("sec62")
        path = tmp_path / "run.csv"
        report = run(
            "nonlinear",
            problem,
            grid=problem.build_grid(8),
            mesh=uniform_mesh(1.0, 5),
            options=RunOptions(csv_path=path),
        )
        with open(path, encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == RUN_CSV_HEADER
        assert len(rows) == report.n_steps + 1
        assert float(rows[-1][1]) == pytest.approx(1.0)
        assert float(rows[-1][5]) == pytest.approx(report.error_l2)

    def test_snapshots(self, tmp_path):
        """指定時刻のスナップショットが書き出されること"""
        problem = get_problem("sec62")
        report = run(
            "imex",
            problem,
            grid=problem.build_grid(8),
            mesh=uniform_mesh(1.0, 4),
            options=RunOptions(snapshot_times=(0.0, 0.5), snapshot_dir=tmp_path),
        )
        assert set(report.snapshots) == {0.0, 0.5}
        assert all(path.exists() for path in report.snapshots.values())

    def test_allen_cahn_energy_decreases(self):
        """Allen–Cahn の離散エネルギーが単調に減少すること"""
        problem = dataclasses.replace(
            allen_cahn(0.1, "random", final_time=0.2),
            u0=lambda x, y: 0.1 * _sine(x, y),
        )
        report = run("nonlinear", problem, grid=problem.build_grid(16), mesh=uniform_mesh(0.2, 20))
        energies = np.array(report.energies)
        assert len(energies) == 21
        assert np.all(np.diff(energies) <= 1e-12)
