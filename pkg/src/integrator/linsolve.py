# -*- coding: utf-8 -*-
"""
twogridcdm - 線形ソルバーモジュール

各時間ステップで現れる9点疎行列系を解きます。
既定は対角前処理付きBiCGSTAB、小規模格子向けに密行列LU・疎行列LUも選べます。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from src.numerics.compact_ops import StepMatrix

logger = logging.getLogger(__name__)


class LinearMethod(str, Enum):
    """線形ソルバーの種類"""
    KRYLOV = "krylov"  # 対角前処理付きBiCGSTAB
    DENSE_DIRECT = "dense_direct"  # 密行列LU（検証用）
    SPARSE_DIRECT = "sparse_direct"  # SuperLU


class LinearSolveError(RuntimeError):
    """線形ソルバー失敗時の例外"""

    def __init__(
        self,
        message: str,
        iterations: int = 0,
        residual: float = float("nan"),
        method: LinearMethod = LinearMethod.KRYLOV,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.method = method


@dataclass(frozen=True)
class LinearSolveConfig:
    """線形ソルバー設定"""
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iters: Optional[int] = None  # None なら 10 × 未知数
    method: LinearMethod = LinearMethod.KRYLOV
    # 直接法でも真の残差を検査する（debug時）
    check_residual: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError(f"許容誤差は正である必要があります: {self.rel_tol}, {self.abs_tol}")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError(f"max_iters は1以上が必要です: {self.max_iters}")
        object.__setattr__(self, "method", LinearMethod(self.method))

    def iteration_cap(self, n_unknowns: int) -> int:
        return self.max_iters if self.max_iters is not None else 10 * n_unknowns


@dataclass(frozen=True)
class LinearSolveResult:
    """線形ソルバーの結果"""
    x: np.ndarray
    iterations: int
    residual: float
    method: LinearMethod


def _tolerance(rhs_norm: float, cfg: LinearSolveConfig) -> float:
    return max(cfg.rel_tol * rhs_norm, cfg.abs_tol)


def _jacobi_preconditioner(m: StepMatrix) -> spla.LinearOperator:
    diagonal = m.matrix.diagonal()
    if np.any(diagonal == 0):
        raise LinearSolveError("対角成分に0が含まれています", method=LinearMethod.KRYLOV)
    inverse = 1.0 / diagonal
    return spla.LinearOperator(m.matrix.shape, matvec=lambda v: inverse * v, dtype=float)


def _bicgstab(
    m: StepMatrix, rhs: np.ndarray, cfg: LinearSolveConfig, x0: Optional[np.ndarray]
) -> tuple[np.ndarray, int]:
    """前処理付きBiCGSTAB（真の残差で不合格なら1回だけ再開）"""
    cap = cfg.iteration_cap(m.size)
    preconditioner = _jacobi_preconditioner(m)
    tol = _tolerance(float(np.linalg.norm(rhs)), cfg)
    total = 0
    x = np.zeros_like(rhs) if x0 is None else x0.copy()

    for attempt in range(2):
        counter = {"n": 0}

        def _count(_xk: np.ndarray) -> None:
            counter["n"] += 1

        # scipy の停止判定は ‖r‖ ≤ max(rtol·‖b‖, atol)
        x, info = spla.bicgstab(
            m.matrix,
            rhs,
            x0=x,
            rtol=cfg.rel_tol,
            atol=cfg.abs_tol,
            maxiter=max(cap - total, 1),
            M=preconditioner,
            callback=_count,
        )
        total += counter["n"]
        if not np.all(np.isfinite(x)):
            raise LinearSolveError(
                "BiCGSTABが破綻しました（NaN/Inf）", iterations=total, method=LinearMethod.KRYLOV
            )
        residual = float(np.linalg.norm(rhs - m.matvec(x)))
        if residual <= tol:
            return x, total
        if info < 0 or total >= cap:
            break
        logger.debug(f"BiCGSTAB再開: 残差 {residual:.3e} > {tol:.3e} (試行 {attempt + 1})")

    raise LinearSolveError(
        f"BiCGSTABが収束しませんでした: 残差 {residual:.3e}, 反復 {total}",
        iterations=total,
        residual=residual,
        method=LinearMethod.KRYLOV,
    )


def solve(
    m: StepMatrix,
    rhs: np.ndarray,
    cfg: Optional[LinearSolveConfig] = None,
    x0: Optional[np.ndarray] = None,
) -> LinearSolveResult:
    """
    ステップ行列の線形系を解く

    Args:
        m: ステップ行列
        rhs: 右辺（未知数ベクトル）
        cfg: ソルバー設定
        x0: 初期推定値（省略時はゼロ）

    Returns:
        LinearSolveResult: 解と反復数、真の残差

    Raises:
        ValueError: 次元が一致しない場合
        LinearSolveError: 収束しない、または破綻した場合
    """
    cfg = cfg or LinearSolveConfig()
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (m.size,):
        raise ValueError(f"右辺の次元が一致しません: {rhs.shape} != ({m.size},)")
    if not np.all(np.isfinite(rhs)):
        raise LinearSolveError("右辺に有限でない値が含まれています", method=cfg.method)

    if not np.any(rhs):
        return LinearSolveResult(np.zeros_like(rhs), 0, 0.0, cfg.method)

    iterations = 0
    if cfg.method == LinearMethod.KRYLOV:
        x, iterations = _bicgstab(m, rhs, cfg, x0)
    elif cfg.method == LinearMethod.DENSE_DIRECT:
        try:
            x = scipy.linalg.solve(m.matrix.toarray(), rhs)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
            raise LinearSolveError(f"密行列LUに失敗しました: {e}", method=cfg.method) from e
    else:
        try:
            x = spla.splu(m.matrix.tocsc()).solve(rhs)
        except RuntimeError as e:
            raise LinearSolveError(f"疎行列LUに失敗しました: {e}", method=cfg.method) from e

    residual = float(np.linalg.norm(rhs - m.matvec(x)))
    if cfg.method != LinearMethod.KRYLOV and cfg.check_residual:
        tol = _tolerance(float(np.linalg.norm(rhs)), cfg)
        if not residual <= tol:
            raise LinearSolveError(
                f"直接法の残差が許容値を超えました: {residual:.3e} > {tol:.3e}",
                residual=residual,
                method=cfg.method,
            )
    return LinearSolveResult(x=x, iterations=iterations, residual=residual, method=cfg.method)
