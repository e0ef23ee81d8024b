# -*- coding: utf-8 -*-
"""
twogridcdm - 離散エネルギーモジュール

周期境界 Allen–Cahn 計算向けの離散エネルギー汎関数。
"""

import numpy as np

from src.numerics.compact_ops import apply_laplacian_5pt
from src.numerics.grid import GridError, GridFunction


def discrete_energy(u: GridFunction, epsilon: float) -> float:
    """
    𝓔[u] = −(ε²/2) hx hy Σ u·Δ_h u + (1/4) hx hy Σ (1 − u²)²

    Args:
        u: 周期格子上の格子関数
        epsilon: 界面幅 ε

    Returns:
        float: 離散エネルギー

    Raises:
        GridError: Dirichlet格子の場合
    """
    grid = u.grid
    if not grid.is_periodic:
        raise GridError("離散エネルギーは周期格子でのみ定義されます")
    values = u.values
    gradient_part = -0.5 * epsilon**2 * np.sum(values * apply_laplacian_5pt(u).values)
    potential_part = 0.25 * np.sum((1.0 - values**2) ** 2)
    return float(grid.cell_area * (gradient_part + potential_part))
