# -*- coding: utf-8 -*-
"""
twogridcdm - 双三次補間のテスト
"""

import numpy as np
import pytest

from src.integrator.timegrid import make_rng
from src.numerics.grid import GridFunction, build_grid, build_two_grid, inner_l2
from src.numerics.interp import (
    BASIS_BOUND_LEFT,
    BASIS_BOUND_RIGHT,
    C3_L2_BOUND,
    C4_MAX_BOUND,
    InterpolationError,
    build_plan,
    cubic_basis,
    inject,
    prolongate,
)


def _cubic_poly(x, y):
    return 1.0 + x - 2 * y + x * y + x**3 - 3 * x**2 * y + y**3


class TestCubicBasis:
    """3次Lagrange基底のテスト"""

    def test_partition_of_unity(self):
        """基底の和が1になること"""
        xi = np.linspace(0.0, 1.0, 101)
        total = sum(cubic_basis(s, 3, xi) for s in range(4))
        assert np.allclose(total, 1.0)

    def test_nodal_values(self):
        """セル左端では中心節点の基底だけが1になること"""
        values = [cubic_basis(s, 3, 0.0) for s in range(4)]
        assert values == pytest.approx([0.0, 1.0, 0.0, 0.0])

    def test_extrapolation_bounds(self):
        """ずらしたステンシルの基底の上界を超えないこと"""
        xi = np.linspace(0.0, 1.0, 20001)
        # 右隣のセル（x_{i+1}, x_{i+2}）で φ_{i,1} を評価
        right = np.max(np.abs(cubic_basis(1, 3, xi + 1.0)))
        # 左隣のセル（x_{i−2}, x_{i−1}）で φ_{i,1} を評価
        left = np.max(np.abs(cubic_basis(1, 3, xi - 1.0)))
        assert right <= BASIS_BOUND_RIGHT + 1e-12
        assert right == pytest.approx(BASIS_BOUND_RIGHT, abs=1e-6)
        assert left <= BASIS_BOUND_LEFT + 1e-12

    def test_outer_basis_bound(self):
        """外側節点の基底は中央セルで √3/27 を超えないこと"""
        xi = np.linspace(0.0, 1.0, 20001)
        peak = np.max(np.abs(cubic_basis(0, 3, xi)))
        assert peak == pytest.approx(np.sqrt(3.0) / 27.0, abs=1e-6)

    def test_invalid_index(self):
        """基底インデックスが範囲外ならエラーになること"""
        with pytest.raises(InterpolationError):
            cubic_basis(4, 0, 0.5)


class TestProlongation:
    """延長作用素のテスト"""

    def test_cubic_reproduced_dirichlet(self):
        """3次多項式は境界付近を含め厳密に再現されること"""
        pair = build_two_grid(6, 5, 4, 3, 1.0, 1.0)
        plan = build_plan(pair)
        fine = prolongate(plan, pair.coarse.sample(_cubic_poly))
        assert np.allclose(fine.values, pair.fine.sample(_cubic_poly).values, atol=1e-12)

    def test_coincident_nodes_exact(self):
        """粗格子と一致する節点では値がそのまま写ること"""
        pair = build_two_grid(5, 5, 3, 3, 1.0, 1.0, "periodic")
        plan = build_plan(pair)
        coarse = GridFunction(pair.coarse, make_rng(0).standard_normal(pair.coarse.shape))
        fine = prolongate(plan, coarse)
        assert np.array_equal(fine.values[::3, ::3], coarse.values)

    def test_injection_inverts_prolongation(self):
        """注入は延長の左逆になること"""
        pair = build_two_grid(6, 6, 2, 2, 1.0, 1.0)
        plan = build_plan(pair)
        coarse = GridFunction(pair.coarse, make_rng(1).standard_normal(pair.coarse.shape))
        assert np.array_equal(inject(pair, prolongate(plan, coarse)).values, coarse.values)

    def test_fourth_order_accuracy(self):
        """滑らかな関数の補間誤差が H⁴ で減少すること"""
        errors = []
        for n in (8, 16, 32):
            pair = build_two_grid(n, n, 2, 2, 1.0, 1.0)
            plan = build_plan(pair)
            f = lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
            diff = prolongate(plan, pair.coarse.sample(f)) - pair.fine.sample(f)
            errors.append(diff.max_abs())
        slopes = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert slopes[-1] == pytest.approx(4.0, abs=0.15)

    @pytest.mark.parametrize("bc", ["dirichlet", "periodic"])
    def test_boundedness(self, bc):
        """乱数の粗格子関数で L2 と L∞ の有界性が成り立つこと"""
        pair = build_two_grid(6, 6, 3, 3, 1.0, 1.0, bc)
        plan = build_plan(pair)
        rng = make_rng(11)
        for _ in range(1000):
            coarse = GridFunction(pair.coarse, rng.uniform(-1.0, 1.0, pair.coarse.shape))
            if bc == "dirichlet":
                coarse.values[pair.coarse.boundary_mask()] = 0.0
            fine = prolongate(plan, coarse)
            assert np.sqrt(inner_l2(fine, fine)) <= C3_L2_BOUND * np.sqrt(inner_l2(coarse, coarse)) + 1e-12
            assert fine.max_abs() <= C4_MAX_BOUND * coarse.max_abs() + 1e-12

    def test_grid_mismatch(self):
        """計画と異なる格子の関数は延長できないこと"""
        pair = build_two_grid(4, 4, 2, 2, 1.0, 1.0)
        plan = build_plan(pair)
        with pytest.raises(InterpolationError):
            prolongate(plan, build_grid(5, 5, 1.0, 1.0).zeros())

    def test_inject_grid_mismatch(self):
        """細格子以外の関数は注入できないこと"""
        pair = build_two_grid(4, 4, 2, 2, 1.0, 1.0)
        with pytest.raises(InterpolationError):
            inject(pair, pair.coarse.zeros())
