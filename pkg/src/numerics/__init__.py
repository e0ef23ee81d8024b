# -*- coding: utf-8 -*-
"""
twogridcdm - 空間離散化モジュール

格子、4次精度コンパクト差分作用素、双三次Lagrange補間を提供します。
"""

from src.numerics.compact_ops import (
    StepMatrix,
    apply_A,
    apply_A_axis,
    apply_d2_axis,
    apply_Lambda,
    apply_laplacian_5pt,
    apply_step_operator,
    assemble_step_matrix,
    boundary_rhs,
)
from src.numerics.grid import (
    BoundaryCondition,
    Grid2D,
    GridError,
    GridFunction,
    NonFiniteValueError,
    TwoGridPair,
    build_grid,
    build_two_grid,
    inner_l2,
    inner_weighted,
    norms,
)
from src.numerics.interp import InterpolationError, build_plan, cubic_basis, inject, prolongate

__all__ = [
    "BoundaryCondition",
    "Grid2D",
    "GridError",
    "GridFunction",
    "InterpolationError",
    "NonFiniteValueError",
    "StepMatrix",
    "TwoGridPair",
    "apply_A",
    "apply_A_axis",
    "apply_Lambda",
    "apply_d2_axis",
    "apply_laplacian_5pt",
    "apply_step_operator",
    "assemble_step_matrix",
    "boundary_rhs",
    "build_grid",
    "build_plan",
    "build_two_grid",
    "cubic_basis",
    "inject",
    "inner_l2",
    "inner_weighted",
    "norms",
    "prolongate",
]
