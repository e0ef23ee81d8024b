# -*- coding: utf-8 -*-
"""
twogridcdm - 双三次Lagrange補間モジュール

粗格子関数を細格子へ延長する区分的双三次Lagrange補間 Π_H を提供します。
Dirichlet境界では端のセルでずらしたステンシル、周期境界では巡回ステンシルを使います。
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from src.numerics.grid import GridError, GridFunction, MIN_NODES, TwoGridPair

logger = logging.getLogger(__name__)

# L2 有界性定数（粗格子ノルムに対する細格子ノルム）
C3_L2_BOUND = 4.0 * (3.0 + 27.0**2 + (10.0 + 7.0 * np.sqrt(7.0)) ** 2) / 27.0**2
# L∞ 有界性定数
C4_MAX_BOUND = ((54.0 + 2.0 * np.sqrt(3.0)) / 27.0) ** 2
# 外挿セルにおける基底関数の上界
BASIS_BOUND_RIGHT = (7.0 * np.sqrt(7.0) - 10.0) / 27.0
BASIS_BOUND_LEFT = (7.0 * np.sqrt(7.0) + 10.0) / 27.0


class InterpolationError(GridError):
    """補間関連のエラー"""


def _lagrange_cubic(s: int, xi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """節点 −1, 0, 1, 2 上の3次Lagrange基底（xi は中心節点からの相対座標）"""
    if s == 0:
        return -xi * (xi - 1.0) * (xi - 2.0) / 6.0
    if s == 1:
        return (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0
    if s == 2:
        return -(xi + 1.0) * xi * (xi - 2.0) / 2.0
    if s == 3:
        return (xi + 1.0) * xi * (xi - 1.0) / 6.0
    raise InterpolationError(f"基底インデックスは0..3です: {s}")


def cubic_basis(
    s: int,
    cell_index: int,
    local_x: Union[float, np.ndarray],
    n_cells: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """
    セル内の3次Lagrange基底 φ_{i,s} を評価

    セル (x_i, x_{i+1}) の基底は節点 x_{i-1}, x_i, x_{i+1}, x_{i+2} に付随します。
    n_cells を与えた場合（Dirichlet）、最初のセルは φ_{1,s}、最後のセルは φ_{N-2,s} を使います。

    Args:
        s: 基底インデックス（0..3）
        cell_index: セル番号 i
        local_x: セル内の相対座標（0..1）
        n_cells: セル数（Dirichletのずらしステンシル用）

    Returns:
        基底関数の値
    """
    xi = np.asarray(local_x, dtype=float)
    if n_cells is not None:
        if cell_index == 0:
            xi = xi - 1.0
        elif cell_index == n_cells - 1:
            xi = xi + 1.0
    value = _lagrange_cubic(s, xi)
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class AxisStencil:
    """一方向の補間ステンシル（細格子節点ごとの粗格子インデックス4つと重み4つ）"""
    indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def _axis_stencil(n_coarse: int, ratio: int, periodic: bool) -> AxisStencil:
    """一方向のステンシルを事前計算"""
    n_fine_nodes = n_coarse * ratio if periodic else n_coarse * ratio + 1
    fine = np.arange(n_fine_nodes)
    cell = np.minimum(fine // ratio, n_coarse - 1)
    local = (fine - cell * ratio) / ratio

    if periodic:
        start = cell - 1
        xi = local
    else:
        # 端のセルでは内側にずらしたステンシルを使う
        start = np.clip(cell - 1, 0, n_coarse - 3)
        xi = local + (cell - 1 - start)

    offsets = np.arange(4)
    indices = start[:, None] + offsets[None, :]
    if periodic:
        indices = np.mod(indices, n_coarse)
    weights = np.stack([_lagrange_cubic(s, xi) for s in range(4)], axis=1)

    # 粗格子節点と一致する細格子節点はインデックス演算で判定し、厳密な単位ベクトルにする
    coincident = fine % ratio == 0
    coarse_node = fine // ratio
    position = coarse_node - start
    weights[coincident] = 0.0
    weights[np.flatnonzero(coincident), position[coincident]] = 1.0
    return AxisStencil(indices=indices, weights=weights)


@dataclass(frozen=True)
class ProlongationPlan:
    """粗細格子ペアに対する事前計算済みの延長計画"""
    pair: TwoGridPair
    x: AxisStencil
    y: AxisStencil


def build_plan(pair: TwoGridPair) -> ProlongationPlan:
    """
    延長計画を構築

    Raises:
        InterpolationError: 粗格子が小さすぎる場合
    """
    coarse = pair.coarse
    if coarse.nx < MIN_NODES or coarse.ny < MIN_NODES:
        raise InterpolationError(f"粗格子が小さすぎます: ({coarse.nx}, {coarse.ny})")
    periodic = coarse.is_periodic
    plan = ProlongationPlan(
        pair=pair,
        x=_axis_stencil(coarse.nx, pair.mx, periodic),
        y=_axis_stencil(coarse.ny, pair.my, periodic),
    )
    logger.debug(f"延長計画構築: 粗 {coarse.shape} → 細 {pair.fine.shape}")
    return plan


def prolongate(plan: ProlongationPlan, w_coarse: GridFunction) -> GridFunction:
    """
    粗格子関数を細格子へ延長（Π_H = Π_{H,y} Π_{H,x}）

    Raises:
        InterpolationError: 格子が計画と一致しない場合
    """
    if w_coarse.grid != plan.pair.coarse:
        raise InterpolationError("延長対象の格子が計画の粗格子と一致しません")
    values = w_coarse.values
    # x方向: (細i, 粗j)
    along_x = np.einsum("is,isj->ij", plan.x.weights, values[plan.x.indices, :])
    # y方向: (細i, 細j)
    fine_values = np.einsum("js,ijs->ij", plan.y.weights, along_x[:, plan.y.indices])
    return GridFunction(plan.pair.fine, fine_values)


def inject(pair: TwoGridPair, w_fine: GridFunction) -> GridFunction:
    """細格子関数を一致節点で粗格子へ点ごとに注入"""
    if w_fine.grid != pair.fine:
        raise InterpolationError("注入対象の格子が細格子と一致しません")
    return GridFunction(pair.coarse, w_fine.values[:: pair.mx, :: pair.my].copy())
