# -*- coding: utf-8 -*-
"""
twogridcdm - コンパクト差分作用素モジュール

4次精度コンパクト作用素 A_x, A_y, A、2階中心差分 d²、Λ = A_x d²_y + A_y d²_x の
ステンシル適用と、各時間ステップの疎行列組み立てを提供します。
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

from src.numerics.grid import Grid2D, GridError, GridFunction

logger = logging.getLogger(__name__)

Axis = Literal["x", "y"]

_AXIS_INDEX = {"x": 0, "y": 1}


def _axis(axis: Axis) -> int:
    if axis not in _AXIS_INDEX:
        raise ValueError(f"無効な軸: {axis}")
    return _AXIS_INDEX[axis]


def _spacing(grid: Grid2D, axis: Axis) -> float:
    return grid.hx if axis == "x" else grid.hy


def _shift(values: np.ndarray, offset: int, ax: int) -> np.ndarray:
    """周期的なシフト（v[i+offset]）"""
    return np.roll(values, -offset, axis=ax)


def _interior_slice(ax: int, start: int, stop: Optional[int]) -> tuple[slice, slice]:
    full = slice(None)
    part = slice(start, stop)
    return (part, full) if ax == 0 else (full, part)


def _apply_average(values: np.ndarray, ax: int, periodic: bool) -> np.ndarray:
    """(1, 10, 1)/12 の平均化ステンシル"""
    if periodic:
        return (_shift(values, -1, ax) + 10.0 * values + _shift(values, 1, ax)) / 12.0
    out = values.copy()
    out[_interior_slice(ax, 1, -1)] = (
        values[_interior_slice(ax, None, -2)]
        + 10.0 * values[_interior_slice(ax, 1, -1)]
        + values[_interior_slice(ax, 2, None)]
    ) / 12.0
    return out


def _apply_second_difference(values: np.ndarray, ax: int, h: float, periodic: bool) -> np.ndarray:
    """2階中心差分。Dirichletでは軸方向の境界節点で0"""
    if periodic:
        return (_shift(values, -1, ax) - 2.0 * values + _shift(values, 1, ax)) / h**2
    out = np.zeros_like(values)
    out[_interior_slice(ax, 1, -1)] = (
        values[_interior_slice(ax, None, -2)]
        - 2.0 * values[_interior_slice(ax, 1, -1)]
        + values[_interior_slice(ax, 2, None)]
    ) / h**2
    return out


def _zero_boundary(grid: Grid2D, values: np.ndarray) -> np.ndarray:
    if not grid.is_periodic:
        values[grid.boundary_mask()] = 0.0
    return values


def apply_A_axis(w: GridFunction, axis: Axis) -> GridFunction:
    """
    一方向のコンパクト作用素 A_{κ,axis} を適用

    Dirichlet境界の行は恒等写像です。
    """
    values = _apply_average(w.values, _axis(axis), w.grid.is_periodic)
    return GridFunction(w.grid, values)


def apply_d2_axis(w: GridFunction, axis: Axis) -> GridFunction:
    """一方向の2階中心差分 d²_{κ,axis} を適用"""
    values = _apply_second_difference(
        w.values, _axis(axis), _spacing(w.grid, axis), w.grid.is_periodic
    )
    return GridFunction(w.grid, values)


def apply_A(w: GridFunction) -> GridFunction:
    """A = A_x A_y"""
    periodic = w.grid.is_periodic
    return GridFunction(w.grid, _apply_average(_apply_average(w.values, 1, periodic), 0, periodic))


def apply_Lambda(w: GridFunction) -> GridFunction:
    """
    Λ = A_x d²_y + A_y d²_x を適用

    Dirichlet格子では内部節点でのみ定義され、境界節点の値は0になります。
    内部節点の評価では w の境界値を参照します。
    """
    grid = w.grid
    periodic = grid.is_periodic
    d2y = _apply_second_difference(w.values, 1, grid.hy, periodic)
    d2x = _apply_second_difference(w.values, 0, grid.hx, periodic)
    values = _apply_average(d2y, 0, periodic) + _apply_average(d2x, 1, periodic)
    return GridFunction(grid, _zero_boundary(grid, values))


def apply_laplacian_5pt(w: GridFunction) -> GridFunction:
    """標準の5点ラプラシアン Δ_h"""
    grid = w.grid
    periodic = grid.is_periodic
    values = _apply_second_difference(w.values, 0, grid.hx, periodic) + _apply_second_difference(
        w.values, 1, grid.hy, periodic
    )
    return GridFunction(grid, _zero_boundary(grid, values))


def apply_step_operator(
    alpha: float,
    gamma: float,
    d: Optional[GridFunction],
    w: GridFunction,
) -> GridFunction:
    """
    α·A − γ·Λ − A∘diag(d) を行列を組まずに適用

    Dirichlet格子では内部節点の値のみ意味を持ちます（境界は0）。
    """
    grid = w.grid
    values = alpha * apply_A(w).values - gamma * apply_Lambda(w).values
    if d is not None:
        values -= apply_A(GridFunction(grid, d.values * w.values)).values
    return GridFunction(grid, _zero_boundary(grid, values))


# ---------------------------------------------------------------------------
# 疎行列組み立て
# ---------------------------------------------------------------------------

def _axis_matrices(n: int, h: float, periodic: bool) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """一方向の平均化行列と2階差分行列"""
    if periodic:
        # 巡回行列: 隅の (0, n−1), (n−1, 0) が周期方向の隣接
        offsets = [-(n - 1), -1, 0, 1, n - 1]
        average = sp.diags([1.0, 1.0, 10.0, 1.0, 1.0], offsets, shape=(n, n)) / 12.0
        second = sp.diags([1.0, 1.0, -2.0, 1.0, 1.0], offsets, shape=(n, n)) / h**2
        return average.tocsr(), second.tocsr()

    nodes = n + 1
    ones = np.ones(nodes - 1)
    average = (sp.diags([ones, 10.0 * np.ones(nodes), ones], [-1, 0, 1]) / 12.0).tolil()
    second = (sp.diags([ones, -2.0 * np.ones(nodes), ones], [-1, 0, 1]) / h**2).tolil()
    for row in (0, nodes - 1):
        # 境界行: A は恒等、d² は未定義（0）
        average[row, :] = 0.0
        average[row, row] = 1.0
        second[row, :] = 0.0
    return average.tocsr(), second.tocsr()


@dataclass(frozen=True)
class _OperatorBlocks:
    """格子ごとに一度だけ組み立てる A と Λ（全節点）"""
    A: sp.csr_matrix
    Lambda: sp.csr_matrix
    unknowns: np.ndarray
    boundary: np.ndarray


@lru_cache(maxsize=16)
def _operator_blocks(grid: Grid2D) -> _OperatorBlocks:
    ax, dx = _axis_matrices(grid.nx, grid.hx, grid.is_periodic)
    ay, dy = _axis_matrices(grid.ny, grid.hy, grid.is_periodic)
    # 辞書式順序: 平坦化インデックス = i * (節点数_y) + j
    A = sp.kron(ax, ay, format="csr")
    Lambda = (sp.kron(ax, dy) + sp.kron(dx, ay)).tocsr()
    mask = grid.boundary_mask().ravel()
    unknowns = np.flatnonzero(~mask)
    boundary = np.flatnonzero(mask)
    logger.debug(f"作用素ブロック組み立て: {grid.shape}, 未知数 {unknowns.size}")
    return _OperatorBlocks(A=A, Lambda=Lambda, unknowns=unknowns, boundary=boundary)


def _full_operator(
    grid: Grid2D, alpha: float, gamma: float, d: Optional[GridFunction]
) -> sp.csr_matrix:
    blocks = _operator_blocks(grid)
    op = alpha * blocks.A - gamma * blocks.Lambda
    if d is not None:
        if d.grid != grid:
            raise GridError("反応項 d の格子が一致しません")
        # 点ごとに d を掛けてから A を作用させる
        op = op - blocks.A @ sp.diags(d.values.ravel())
    return op.tocsr()


@dataclass(frozen=True)
class StepMatrix:
    """
    1ステップ分の線形系行列 α·A − γ·Λ − A∘diag(d)

    Dirichlet格子では内部未知数、周期格子では全未知数に対する行列です。
    """
    grid: Grid2D
    matrix: sp.csr_matrix = field(repr=False)
    alpha: float
    gamma: float
    d: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def dump_matrix_market(self, path: Union[str, Path]) -> Path:
        """MatrixMarket座標形式で書き出す（デバッグ用）"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        scipy.io.mmwrite(str(path), self.matrix.tocoo(), comment=f"alpha={self.alpha} gamma={self.gamma}")
        return path


def assemble_step_matrix(
    grid: Grid2D,
    alpha: float,
    gamma: float,
    d: Optional[GridFunction] = None,
) -> StepMatrix:
    """
    ステップ行列を組み立てる

    Dirichlet境界節点からの寄与は行列に含まれません（boundary_rhs を参照）。

    Args:
        grid: 格子
        alpha: 質量係数（BDF核 b0）
        gamma: 拡散係数 c
        d: 反応場 f'(·)（省略可）

    Returns:
        StepMatrix: 組み立てた行列

    Raises:
        ValueError: alpha が正でない場合
    """
    if alpha <= 0:
        raise ValueError(f"質量係数 alpha は正である必要があります: {alpha}")
    blocks = _operator_blocks(grid)
    op = _full_operator(grid, alpha, gamma, d)
    matrix = op[blocks.unknowns][:, blocks.unknowns].tocsr()
    return StepMatrix(
        grid=grid,
        matrix=matrix,
        alpha=float(alpha),
        gamma=float(gamma),
        d=None if d is None else d.values.copy(),
    )


def boundary_rhs(
    grid: Grid2D,
    alpha: float,
    gamma: float,
    d: Optional[GridFunction],
    boundary_values: GridFunction,
) -> GridFunction:
    """
    既知のDirichlet境界値を右辺へ移した寄与（符号反転済み）

    Raises:
        GridError: 周期格子の場合
    """
    if grid.is_periodic:
        raise GridError("周期格子には境界寄与がありません")
    out = np.zeros(grid.shape)
    boundary = boundary_values.values.ravel()[_operator_blocks(grid).boundary]
    if not np.any(boundary):
        return GridFunction(grid, out)
    blocks = _operator_blocks(grid)
    op = _full_operator(grid, alpha, gamma, d)
    coupling = op[blocks.unknowns][:, blocks.boundary]
    out.ravel()[blocks.unknowns] = -(coupling @ boundary)
    return GridFunction(grid, out)


def to_unknowns(w: GridFunction) -> np.ndarray:
    """格子関数から未知数ベクトル（辞書式順序）を取り出す"""
    return w.values.ravel()[_operator_blocks(w.grid).unknowns].copy()


def from_unknowns(
    grid: Grid2D, x: np.ndarray, boundary_values: Optional[GridFunction] = None
) -> GridFunction:
    """未知数ベクトルと境界値から格子関数を復元"""
    values = np.zeros(grid.shape) if boundary_values is None else boundary_values.values.copy()
    values.ravel()[_operator_blocks(grid).unknowns] = x
    return GridFunction(grid, values)
