# -*- coding: utf-8 -*-
"""
twogridcdm - 時間格子モジュール

可変時間刻み、BDF2畳み込み核、DOC核（離散直交畳み込み核）、
乱数時間格子と適応時間刻み戦略を提供します。
"""

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

# 隣接刻み比の上限（DOC核の正値性が保証される範囲）
RATIO_BOUND = 4.8645
DEFAULT_R_MAX = 4.8


class TimeMeshError(ValueError):
    """時間格子関連のエラー"""


def make_rng(seed: int) -> np.random.Generator:
    """
    再現可能な乱数生成器

    64bitカウンタベースの Philox を使い、プラットフォーム間で同じ系列を得ます。
    """
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class TimeMesh:
    """
    時間格子 0 = t_0 < t_1 < ... < t_N = T

    刻み τ_k = t_k − t_{k−1}、比 r_k = τ_k/τ_{k−1}（r_1 = 0）。
    インデックスは1始まりで、配列の0番目は未使用です。
    """
    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        if times.ndim != 1 or times.size < 2:
            raise TimeMeshError("時間格子には2点以上が必要です")
        if times[0] != 0.0:
            raise TimeMeshError(f"t_0 は0である必要があります: {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise TimeMeshError("時刻は狭義単調増加である必要があります")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @classmethod
    def from_steps(cls, steps: np.ndarray, final_time: Optional[float] = None) -> "TimeMesh":
        """
        刻み列から作成

        Args:
            steps: τ_1..τ_N
            final_time: 指定時は t_N をこの値に揃える
        """
        steps = np.asarray(steps, dtype=float)
        if np.any(steps <= 0):
            raise TimeMeshError("刻みは正である必要があります")
        times = np.concatenate([[0.0], np.cumsum(steps)])
        if final_time is not None:
            times[-1] = float(final_time)
        return cls(times)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> np.ndarray:
        """τ（インデックス1..N、0番目は0）"""
        return np.concatenate([[0.0], np.diff(self.times)])

    @property
    def ratios(self) -> np.ndarray:
        """r（インデックス1..N、r_1 = 0）"""
        tau = self.steps
        r = np.zeros_like(tau)
        r[2:] = tau[2:] / tau[1:-1]
        return r

    @property
    def max_step(self) -> float:
        return float(np.max(self.steps[1:]))

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.n_steps >= 2 else 0.0

    def validate(self, strict: bool = True) -> "TimeMesh":
        """
        刻み比を検証

        Raises:
            TimeMeshError: strict かつ r_k ≥ 4.8645 の場合
        """
        if strict and self.max_ratio >= RATIO_BOUND:
            raise TimeMeshError(f"刻み比が上限を超えています: {self.max_ratio:.4f} ≥ {RATIO_BOUND}")
        return self

    def to_csv(self, path: Union[str, Path]) -> Path:
        """CSV（k,t_k,tau_k,r_k）に書き出す"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tau, r = self.steps, self.ratios
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["k", "t_k", "tau_k", "r_k"])
            for k, t in enumerate(self.times):
                writer.writerow([k, repr(float(t)), repr(float(tau[k])), repr(float(r[k]))])
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "TimeMesh":
        """CSVから読み込む（t_k 列を厳密に復元）"""
        with open(path, "r", encoding="utf-8") as f:
            times = [float(row["t_k"]) for row in csv.DictReader(f)]
        return cls(np.array(times))


def uniform_mesh(final_time: float, n_steps: int) -> TimeMesh:
    """一様時間格子"""
    if n_steps < 1 or final_time <= 0:
        raise TimeMeshError(f"無効な一様格子指定: T={final_time}, N={n_steps}")
    times = final_time * np.arange(n_steps + 1) / n_steps
    times[-1] = final_time
    return TimeMesh(times)


def random_mesh(
    final_time: float,
    n_steps: int,
    seed: int,
    lower_ratio: float = 1.0 / RATIO_BOUND,
) -> TimeMesh:
    """
    乱数時間格子 τ_k = T θ_k / S（θ_k は (lower_ratio, 1) 上の一様乱数）

    Args:
        final_time: 終端時刻 T
        n_steps: ステップ数 N（2以上）
        seed: 乱数シード
        lower_ratio: θ の下限

    Returns:
        TimeMesh: 生成された格子（max r_k < 1/lower_ratio）
    """
    if n_steps < 2:
        raise TimeMeshError(f"ステップ数は2以上が必要です: {n_steps}")
    rng = make_rng(seed)
    theta = rng.uniform(lower_ratio, 1.0, size=n_steps)
    # 下限そのものが出た場合は開区間に収める
    theta = np.where(theta <= lower_ratio, np.nextafter(lower_ratio, 1.0), theta)
    steps = final_time * theta / np.sum(theta)
    mesh = TimeMesh.from_steps(steps, final_time=final_time)
    logger.debug(f"乱数時間格子生成: N={n_steps}, seed={seed}, max r={mesh.max_ratio:.4f}")
    return mesh


@dataclass(frozen=True)
class BDFKernels:
    """
    可変刻みBDF2の畳み込み核 b^{(n)}_0, b^{(n)}_1（インデックス1..N）

    b^{(n)}_j = 0 (j ≥ 2)、b^{(1)}_0 = 1/τ_1、b^{(1)}_1 = 0。
    """
    b0: np.ndarray = field(repr=False)
    b1: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.b0.size - 1

    def kernel(self, n: int, j: int) -> float:
        """b^{(n)}_j"""
        if j == 0:
            return float(self.b0[n])
        if j == 1:
            return float(self.b1[n])
        return 0.0


def bdf_coefficients(tau_n: float, tau_prev: Optional[float]) -> tuple[float, float]:
    """
    1ステップ分のBDF核（tau_prev が None ならBDF1）

    Returns:
        tuple[float, float]: (b0, b1)
    """
    if tau_prev is None:
        return 1.0 / tau_n, 0.0
    r = tau_n / tau_prev
    b0 = (1.0 + 2.0 * r) / (tau_n * (1.0 + r))
    b1 = -(r * r) / (tau_n * (1.0 + r))
    return b0, b1


def bdf2_kernels(mesh: TimeMesh) -> BDFKernels:
    """時間格子からBDF2核を計算"""
    tau = mesh.steps
    b0 = np.zeros(mesh.n_steps + 1)
    b1 = np.zeros(mesh.n_steps + 1)
    for n in range(1, mesh.n_steps + 1):
        b0[n], b1[n] = bdf_coefficients(tau[n], tau[n - 1] if n >= 2 else None)
    return BDFKernels(b0=b0, b1=b1)


class DOCKernels:
    """
    DOC核 θ^{(n)}_{n−m}（1 ≤ m ≤ n ≤ N）

    Σ_{m=k}^{n} θ^{(n)}_{n−m} b^{(m)}_{m−k} = δ_{nk} を満たす下三角の逆核。
    行ごとに遅延計算し、cache=True ならキャッシュします。
    """

    def __init__(self, kernels: BDFKernels, cache: bool = True):
        self.kernels = kernels
        self.cache = cache
        self._rows: dict[int, np.ndarray] = {}

    @property
    def n_steps(self) -> int:
        return self.kernels.n_steps

    def row(self, n: int) -> np.ndarray:
        """
        第n行を取得

        Returns:
            np.ndarray: 長さ n の配列で、要素 m−1 が θ^{(n)}_{n−m}
        """
        if not 1 <= n <= self.n_steps:
            raise IndexError(f"行インデックスが範囲外です: {n}")
        if n in self._rows:
            return self._rows[n]
        b0, b1 = self.kernels.b0, self.kernels.b1
        if np.any(b0[1 : n + 1] == 0):
            raise ZeroDivisionError("b0 が0です")
        theta = np.zeros(n)
        theta[n - 1] = 1.0 / b0[n]
        # θ^{(n)}_{n−k} = −θ^{(n)}_{n−k−1} b^{(k+1)}_1 / b^{(k)}_0
        for k in range(n - 1, 0, -1):
            theta[k - 1] = -theta[k] * b1[k + 1] / b0[k]
        if self.cache:
            self._rows[n] = theta
        return theta

    def theta(self, n: int, m: int) -> float:
        """θ^{(n)}_{n−m}"""
        return float(self.row(n)[m - 1])

    def matrix(self) -> np.ndarray:
        """下三角行列 Θ[n−1, m−1] = θ^{(n)}_{n−m}"""
        size = self.n_steps
        out = np.zeros((size, size))
        for n in range(1, size + 1):
            out[n - 1, :n] = self.row(n)
        return out


def doc_kernels(kernels: BDFKernels, cache: bool = True) -> DOCKernels:
    """BDF2核からDOC核を構築"""
    return DOCKernels(kernels, cache=cache)


class AdaptiveIndicator(str, Enum):
    """適応刻みの指標"""
    SOLUTION = "solution"  # ‖∂_τ u^n‖²
    ENERGY = "energy"  # (∂_τ E[u^n])²


@dataclass(frozen=True)
class AdaptiveConfig:
    """適応時間刻み設定"""
    tau_min: float
    tau_max: float
    eta: float
    r_max: float = DEFAULT_R_MAX
    indicator: AdaptiveIndicator = AdaptiveIndicator.SOLUTION

    def __post_init__(self):
        if not 0 < self.tau_min <= self.tau_max:
            raise TimeMeshError(f"0 < tau_min ≤ tau_max が必要です: {self.tau_min}, {self.tau_max}")
        if self.eta < 0:
            raise TimeMeshError(f"eta は非負である必要があります: {self.eta}")
        if not 1.0 < self.r_max < RATIO_BOUND:
            raise TimeMeshError(f"r_max は (1, {RATIO_BOUND}) の範囲が必要です: {self.r_max}")
        object.__setattr__(self, "indicator", AdaptiveIndicator(self.indicator))


def adaptive_next(tau_n: float, indicator_sq: float, cfg: AdaptiveConfig) -> float:
    """
    次の時間刻みを決定

    τ_{n+1} = min{ max{τ_min, τ_max/sqrt(1 + η·indicator)}, r_max·τ_n }

    Raises:
        TimeMeshError: tau_n が正でない、または指標が負の場合
    """
    if tau_n <= 0:
        raise TimeMeshError(f"tau_n は正である必要があります: {tau_n}")
    if indicator_sq < 0:
        raise TimeMeshError(f"指標は非負である必要があります: {indicator_sq}")
    candidate = cfg.tau_max / np.sqrt(1.0 + cfg.eta * indicator_sq)
    return float(min(max(cfg.tau_min, candidate), cfg.r_max * tau_n))
