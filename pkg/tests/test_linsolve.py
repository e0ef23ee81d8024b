# -*- coding: utf-8 -*-
"""
twogridcdm - 線形ソルバーのテスト
"""

import numpy as np
import pytest

from src.integrator.linsolve import (
    LinearMethod,
    LinearSolveConfig,
    LinearSolveError,
    solve,
)
from src.integrator.timegrid import make_rng
from src.numerics.compact_ops import assemble_step_matrix
from src.numerics.grid import GridFunction, build_grid


@pytest.fixture
def system():
    grid = build_grid(12, 12, 1.0, 1.0)
    d = GridFunction(grid, make_rng(0).uniform(-1.0, 1.0, grid.shape))
    matrix = assemble_step_matrix(grid, 40.0, 1.0, d)
    x_true = make_rng(1).standard_normal(matrix.size)
    return matrix, x_true, matrix.matvec(x_true)


class TestLinearSolveConfig:
    """ソルバー設定のテスト"""

    def test_defaults(self):
        """既定値が設定されること"""
        cfg = LinearSolveConfig()
        assert cfg.rel_tol == 1e-12
        assert cfg.abs_tol == 1e-14
        assert cfg.method == LinearMethod.KRYLOV
        assert cfg.iteration_cap(100) == 1000

    def test_method_from_string(self):
        """文字列の手法名が列挙型に変換されること"""
        assert LinearSolveConfig(method="sparse_direct").method == LinearMethod.SPARSE_DIRECT

    def test_invalid_tolerance(self):
        """正でない許容誤差はエラーになること"""
        with pytest.raises(ValueError):
            LinearSolveConfig(rel_tol=0.0)


class TestSolve:
    """solve のテスト"""

    @pytest.mark.parametrize("method", list(LinearMethod))
    def test_methods_agree(self, system, method):
        """全ての手法で同じ解が得られること"""
        matrix, x_true, rhs = system
        result = solve(matrix, rhs, LinearSolveConfig(method=method, check_residual=True))
        assert np.allclose(result.x, x_true, atol=1e-9)
        assert result.residual <= 1e-12 * np.linalg.norm(rhs) + 1e-14
        assert result.method == method

    @pytest.mark.parametrize("bc", ["dirichlet", "periodic"])
    def test_krylov_matches_dense_on_random_systems(self, bc):
        """小さな格子の乱数系100個で BiCGSTAB と密直接法が一致すること"""
        rng = make_rng(42)
        for _ in range(100):
            n = int(rng.integers(4, 13))
            grid = build_grid(n, n, 1.0, 1.0, bc)
            d = GridFunction(grid, rng.uniform(-1.0, 1.0, grid.shape))
            matrix = assemble_step_matrix(grid, rng.uniform(20.0, 200.0), rng.uniform(0.1, 1.0), d)
            rhs = rng.standard_normal(matrix.size)
            krylov = solve(matrix, rhs)
            dense = solve(matrix, rhs, LinearSolveConfig(method="dense_direct"))
            assert np.linalg.norm(krylov.x - dense.x) <= 1e-9 * np.linalg.norm(dense.x)

    def test_krylov_counts_iterations(self, system):
        """BiCGSTAB の反復数が記録されること"""
        matrix, _, rhs = system
        result = solve(matrix, rhs)
        assert result.iterations > 0

    def test_warm_start(self, system):
        """真の解から始めれば反復数が増えないこと"""
        matrix, x_true, rhs = system
        cold = solve(matrix, rhs)
        warm = solve(matrix, rhs, x0=x_true)
        assert warm.iterations <= cold.iterations

    def test_zero_rhs(self, system):
        """右辺0なら反復せずに0を返すこと"""
        matrix, _, _ = system
        result = solve(matrix, np.zeros(matrix.size))
        assert result.iterations == 0
        assert not np.any(result.x)

    def test_dimension_mismatch(self, system):
        """右辺の次元が違えばエラーになること"""
        matrix, _, _ = system
        with pytest.raises(ValueError):
            solve(matrix, np.ones(matrix.size + 1))

    def test_non_finite_rhs(self, system):
        """右辺に NaN があればエラーになること"""
        matrix, _, rhs = system
        rhs = rhs.copy()
        rhs[0] = np.nan
        with pytest.raises(LinearSolveError):
            solve(matrix, rhs)

    def test_iteration_cap(self, system):
        """反復上限に達すると属性付きのエラーになること"""
        matrix, _, rhs = system
        with pytest.raises(LinearSolveError) as exc_info:
            solve(matrix, rhs, LinearSolveConfig(max_iters=1, rel_tol=1e-15, abs_tol=1e-300))
        assert exc_info.value.iterations >= 1
        assert exc_info.value.method == LinearMethod.KRYLOV
