# -*- coding: utf-8 -*-
"""
twogridcdm - 格子モジュールのテスト
"""

import csv

import numpy as np
import pytest

from src.integrator.timegrid import make_rng
from src.numerics.grid import (
    BoundaryCondition,
    GridError,
    GridFunction,
    NonFiniteValueError,
    a_norm,
    build_grid,
    build_two_grid,
    export_snapshot_csv,
    inner_l2,
    inner_weighted,
    norms,
)


def _random_function(grid, rng, zero_boundary=True) -> GridFunction:
    values = rng.uniform(-1.0, 1.0, grid.shape)
    w = GridFunction(grid, values)
    if zero_boundary:
        w.values[grid.boundary_mask()] = 0.0
    return w


class TestBuildGrid:
    """格子構築のテスト"""

    def test_dirichlet_shape(self):
        """Dirichlet格子は境界を含む節点を持つこと"""
        grid = build_grid(8, 6, 1.0, 2.0)
        assert grid.shape == (9, 7)
        assert grid.hx == pytest.approx(0.125)
        assert grid.hy == pytest.approx(2.0 / 6)

    def test_periodic_shape(self):
        """周期格子は右端の節点を持たないこと"""
        grid = build_grid(8, 8, 2.0, 2.0, "periodic", -1.0, -1.0)
        assert grid.shape == (8, 8)
        x, _ = grid.axis_coordinates()
        assert x[0] == pytest.approx(-1.0)
        assert x[-1] == pytest.approx(0.75)

    def test_too_few_nodes(self):
        """分割数が4未満ならエラーになること"""
        with pytest.raises(GridError):
            build_grid(3, 8, 1.0, 1.0)

    def test_non_positive_length(self):
        """領域長が正でなければエラーになること"""
        with pytest.raises(GridError):
            build_grid(8, 8, 0.0, 1.0)

    def test_two_grid_nested(self):
        """細格子の分割数が粗格子の M 倍になること"""
        pair = build_two_grid(4, 5, 3, 2, 1.0, 1.0)
        assert pair.fine.nx == 12
        assert pair.fine.ny == 10
        assert pair.coarse.bc == BoundaryCondition.DIRICHLET

    def test_two_grid_ratio_too_small(self):
        """細分比が2未満ならエラーになること"""
        with pytest.raises(GridError):
            build_two_grid(4, 4, 1, 2, 1.0, 1.0)


class TestGridFunction:
    """格子関数のテスト"""

    def test_shape_mismatch(self):
        """配列形状が格子と一致しなければエラーになること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        with pytest.raises(GridError):
            GridFunction(grid, np.zeros((4, 4)))

    def test_check_finite(self):
        """NaNの位置が例外に記録されること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        w = grid.zeros()
        w.values[2, 3] = np.nan
        with pytest.raises(NonFiniteValueError) as exc_info:
            w.check_finite()
        assert exc_info.value.where == (2, 3)

    def test_arithmetic_requires_same_grid(self):
        """異なる格子の関数同士は加算できないこと"""
        a = build_grid(4, 4, 1.0, 1.0).zeros()
        b = build_grid(5, 5, 1.0, 1.0).zeros()
        with pytest.raises(GridError):
            _ = a + b

    def test_scalar_multiply(self):
        """スカラー倍が両側から使えること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        w = grid.sample(lambda x, y: x + y)
        assert np.allclose((2.0 * w).values, (w * 2.0).values)


class TestInnerProducts:
    """離散内積とノルムのテスト"""

    def test_constant_one_dirichlet(self):
        """内部節点のみの和になること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        ones = GridFunction(grid, np.ones(grid.shape))
        assert inner_l2(ones, ones) == pytest.approx(9 / 16)

    def test_constant_one_periodic(self):
        """周期格子では全節点の和が面積になること"""
        grid = build_grid(8, 8, 2.0, 2.0, "periodic")
        ones = GridFunction(grid, np.ones(grid.shape))
        assert inner_l2(ones, ones) == pytest.approx(4.0)

    def test_weighted_trapezoid(self):
        """境界重み付き内積は台形則で面積を与えること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        ones = GridFunction(grid, np.ones(grid.shape))
        assert inner_weighted(ones, ones) == pytest.approx(1.0)

    def test_weighted_rejects_periodic(self):
        """周期格子では境界重み付き内積を使えないこと"""
        grid = build_grid(4, 4, 1.0, 1.0, "periodic")
        with pytest.raises(GridError):
            inner_weighted(grid.zeros(), grid.zeros())

    def test_mismatched_grids(self):
        """格子が違えば内積はエラーになること"""
        with pytest.raises(GridError):
            inner_l2(build_grid(4, 4, 1.0, 1.0).zeros(), build_grid(6, 6, 1.0, 1.0).zeros())

    def test_a_norm_equivalence_dirichlet(self):
        """境界0の関数で (1/3)‖w‖² ≤ ‖w‖²_A ≤ ‖w‖² となること"""
        grid = build_grid(12, 10, 1.0, 1.0)
        rng = make_rng(1)
        for _ in range(100):
            w = _random_function(grid, rng)
            l2_sq = inner_l2(w, w)
            a_sq = a_norm(w) ** 2
            assert l2_sq / 3.0 - 1e-14 <= a_sq <= l2_sq + 1e-14

    def test_a_norm_equivalence_periodic(self):
        """周期関数で (2/3)‖w‖ ≤ ‖w‖_A ≤ ‖w‖ となること"""
        grid = build_grid(10, 12, 1.0, 1.0, "periodic")
        rng = make_rng(2)
        for _ in range(100):
            w = _random_function(grid, rng, zero_boundary=False)
            l2 = np.sqrt(inner_l2(w, w))
            assert 2.0 / 3.0 * l2 - 1e-14 <= a_norm(w) <= l2 + 1e-14

    def test_norms_summary(self):
        """ノルムの組がそれぞれの定義と一致すること"""
        grid = build_grid(8, 8, 1.0, 1.0)
        w = grid.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        summary = norms(w)
        assert summary.max == pytest.approx(1.0)
        assert summary.l2 == pytest.approx(np.sqrt(inner_l2(w, w)))
        assert summary.a_norm <= summary.l2

    def test_reduction_reproducible(self):
        """同じ入力に対して内積がビット単位で一致すること"""
        grid = build_grid(16, 16, 1.0, 1.0)
        w = _random_function(grid, make_rng(3))
        assert inner_l2(w, w) == inner_l2(w.copy(), w.copy())


class TestSnapshotExport:
    """スナップショット書き出しのテスト"""

    def test_csv_layout(self, tmp_path):
        """ヘッダーと行優先の並びで書き出されること"""
        grid = build_grid(4, 4, 1.0, 1.0)
        w = grid.sample(lambda x, y: 10 * x + y)
        path = export_snapshot_csv(w, tmp_path / "snap" / "u.csv")

        with open(path, encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["i", "j", "x", "y", "value"]
        assert len(rows) == 1 + 25
        assert rows[2][:2] == ["0", "1"]
        assert float(rows[-1][4]) == pytest.approx(11.0)
