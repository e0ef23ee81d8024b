# -*- coding: utf-8 -*-
"""
twogridcdm - 空間格子モジュール

一様矩形格子、粗細格子ペア、格子関数および離散内積・ノルムを提供します。
Dirichlet境界と周期境界の両方に対応します。
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

# 双三次ステンシルには各方向4節点が必要
MIN_NODES = 4


class BoundaryCondition(str, Enum):
    """境界条件の種類"""
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"


class GridError(ValueError):
    """格子関連のエラー"""


class NonFiniteValueError(GridError):
    """格子関数にNaN/Infが含まれる場合のエラー"""

    def __init__(self, message: str, where: Optional[tuple[int, int]] = None):
        super().__init__(message)
        self.where = where


@dataclass(frozen=True)
class Grid2D:
    """
    一様2次元格子

    Dirichlet格子は (nx+1)×(ny+1) 節点（境界を含む）、
    周期格子は nx×ny 節点（節点kは x0 + k·hx、節点nxは0に同一視）を持ちます。
    """
    nx: int
    ny: int
    lx: float
    ly: float
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET
    x0: float = 0.0
    y0: float = 0.0

    @property
    def hx(self) -> float:
        """x方向の格子幅"""
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        """y方向の格子幅"""
        return self.ly / self.ny

    @property
    def is_periodic(self) -> bool:
        return self.bc == BoundaryCondition.PERIODIC

    @property
    def shape(self) -> tuple[int, int]:
        """格子関数の配列形状"""
        if self.is_periodic:
            return (self.nx, self.ny)
        return (self.nx + 1, self.ny + 1)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def axis_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """各方向の節点座標"""
        nx_nodes, ny_nodes = self.shape
        x = self.x0 + self.hx * np.arange(nx_nodes)
        y = self.y0 + self.hy * np.arange(ny_nodes)
        return x, y

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """全節点の座標配列 (indexing='ij')"""
        x, y = self.axis_coordinates()
        return np.meshgrid(x, y, indexing="ij")

    def sample(self, func: Callable[..., np.ndarray], *args: float) -> "GridFunction":
        """
        関数を節点で評価して格子関数を作成

        Args:
            func: func(x, y, *args) の形のベクトル化された関数
            *args: 追加引数（時刻など）

        Returns:
            GridFunction: 評価結果
        """
        x, y = self.coordinates()
        values = np.broadcast_to(np.asarray(func(x, y, *args), dtype=float), self.shape)
        return GridFunction(self, np.array(values, dtype=float))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def boundary_mask(self) -> np.ndarray:
        """境界節点のマスク（周期格子では全てFalse）"""
        mask = np.zeros(self.shape, dtype=bool)
        if not self.is_periodic:
            mask[0, :] = mask[-1, :] = True
            mask[:, 0] = mask[:, -1] = True
        return mask


@dataclass(frozen=True)
class TwoGridPair:
    """入れ子になった粗格子と細格子のペア"""
    coarse: Grid2D
    fine: Grid2D
    mx: int
    my: int


@dataclass(eq=False)
class GridFunction:
    """格子関数（節点値と所属格子）"""
    grid: Grid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridError(
                f"配列形状が格子と一致しません: {self.values.shape} != {self.grid.shape}"
            )

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def interior(self) -> np.ndarray:
        """未知数となる節点値（Dirichletは内部節点、周期は全節点）"""
        if self.grid.is_periodic:
            return self.values
        return self.values[1:-1, 1:-1]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def check_finite(self) -> "GridFunction":
        """
        NaN/Infを検出

        Raises:
            NonFiniteValueError: 有限でない値が含まれる場合
        """
        bad = ~np.isfinite(self.values)
        if bad.any():
            where = tuple(int(k) for k in np.argwhere(bad)[0])
            raise NonFiniteValueError(f"有限でない値を検出しました: 節点 {where}", where=where)
        return self

    def __add__(self, other: "GridFunction") -> "GridFunction":
        ensure_same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        ensure_same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NormSummary:
    """離散ノルムの組"""
    l2: float
    max: float
    a_norm: float


def build_grid(
    nx: int,
    ny: int,
    lx: float,
    ly: float,
    bc: Union[BoundaryCondition, str] = BoundaryCondition.DIRICHLET,
    x0: float = 0.0,
    y0: float = 0.0,
) -> Grid2D:
    """
    一様格子を構築

    Args:
        nx, ny: 各方向の分割数
        lx, ly: 領域の長さ
        bc: 境界条件
        x0, y0: 領域の左下隅

    Returns:
        Grid2D: 構築された格子

    Raises:
        GridError: 分割数が4未満、または長さが正でない場合
    """
    if nx < MIN_NODES or ny < MIN_NODES:
        raise GridError(f"分割数は各方向{MIN_NODES}以上が必要です: ({nx}, {ny})")
    if lx <= 0 or ly <= 0:
        raise GridError(f"領域の長さは正である必要があります: ({lx}, {ly})")
    return Grid2D(int(nx), int(ny), float(lx), float(ly), BoundaryCondition(bc), float(x0), float(y0))


def build_two_grid(
    coarse_nx: int,
    coarse_ny: int,
    mx: int,
    my: int,
    lx: float,
    ly: float,
    bc: Union[BoundaryCondition, str] = BoundaryCondition.DIRICHLET,
    x0: float = 0.0,
    y0: float = 0.0,
) -> TwoGridPair:
    """
    粗細格子ペアを構築

    細格子の分割数は粗格子の mx, my 倍になります。

    Raises:
        GridError: 細分比が2未満の場合
    """
    if mx < 2 or my < 2:
        raise GridError(f"細分比は2以上が必要です: ({mx}, {my})")
    coarse = build_grid(coarse_nx, coarse_ny, lx, ly, bc, x0, y0)
    fine = build_grid(coarse_nx * mx, coarse_ny * my, lx, ly, bc, x0, y0)
    return TwoGridPair(coarse=coarse, fine=fine, mx=int(mx), my=int(my))


def ensure_same_grid(w: GridFunction, q: GridFunction) -> None:
    """2つの格子関数が同じ格子上にあることを確認"""
    if w.grid != q.grid:
        raise GridError(f"格子が一致しません: {w.grid} / {q.grid}")


def inner_l2(w: GridFunction, q: GridFunction) -> float:
    """
    離散L2内積

    Dirichletは内部節点の和、周期は全節点の和に κx κy を掛けたもの。
    """
    ensure_same_grid(w, q)
    # 行優先の固定順序で総和を取る
    product = (w.interior() * q.interior()).ravel(order="C")
    return float(w.grid.cell_area * np.sum(product))


def _trapezoid_weights(grid: Grid2D) -> np.ndarray:
    """境界で1/2、角で1/4となる台形則の重み"""
    wx = np.ones(grid.nx + 1)
    wy = np.ones(grid.ny + 1)
    wx[[0, -1]] = 0.5
    wy[[0, -1]] = 0.5
    return np.outer(wx, wy)


def inner_weighted(w: GridFunction, q: GridFunction) -> float:
    """
    境界重み付き離散内積（Dirichlet格子のみ）

    Raises:
        GridError: 周期格子、または格子不一致の場合
    """
    ensure_same_grid(w, q)
    if w.grid.is_periodic:
        raise GridError("周期格子では inner_l2 を使用してください")
    product = (_trapezoid_weights(w.grid) * w.values * q.values).ravel(order="C")
    return float(w.grid.cell_area * np.sum(product))


def a_norm(w: GridFunction) -> float:
    """コンパクト作用素に付随するノルム sqrt((A w, w))"""
    from src.numerics.compact_ops import apply_A

    value = inner_l2(apply_A(w), w)
    return float(np.sqrt(max(value, 0.0)))


def norms(w: GridFunction) -> NormSummary:
    """
    L2、最大値、Aノルムをまとめて計算

    Raises:
        NonFiniteValueError: NaN/Infが含まれる場合
    """
    w.check_finite()
    return NormSummary(
        l2=float(np.sqrt(inner_l2(w, w))),
        max=w.max_abs(),
        a_norm=a_norm(w),
    )


def export_snapshot_csv(w: GridFunction, path: Union[str, Path]) -> Path:
    """
    格子関数をCSVに書き出す（ヘッダー i,j,x,y,value、行優先）

    Returns:
        Path: 書き出したファイルのパス
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x, y = w.grid.axis_coordinates()
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["i", "j", "x", "y", "value"])
        for i in range(w.values.shape[0]):
            for j in range(w.values.shape[1]):
                writer.writerow([i, j, repr(float(x[i])), repr(float(y[j])), repr(float(w.values[i, j]))])
    logger.debug(f"スナップショット書き出し: {path}")
    return path
