# -*- coding: utf-8 -*-
"""
twogridcdm - 時間積分モジュール

時間格子とBDF2/DOC核、線形ソルバー、時間発展スキームを提供します。
スキーム本体は src.integrator.schemes から直接インポートしてください。
"""

from src.integrator.linsolve import LinearMethod, LinearSolveConfig, LinearSolveError, solve
from src.integrator.timegrid import (
    AdaptiveConfig,
    BDFKernels,
    DOCKernels,
    TimeMesh,
    TimeMeshError,
    adaptive_next,
    bdf2_kernels,
    doc_kernels,
    random_mesh,
    uniform_mesh,
)

__all__ = [
    "AdaptiveConfig",
    "BDFKernels",
    "DOCKernels",
    "LinearMethod",
    "LinearSolveConfig",
    "LinearSolveError",
    "TimeMesh",
    "TimeMeshError",
    "adaptive_next",
    "bdf2_kernels",
    "doc_kernels",
    "random_mesh",
    "solve",
    "uniform_mesh",
]
