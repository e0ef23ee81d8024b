# -*- coding: utf-8 -*-
"""
twogridcdm - 問題カタログモジュール

半線形放物型方程式 u_t − cΔu = f(u) + g の具体的な問題設定
（製造解と Allen–Cahn 相場モデル）を提供します。
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from src.integrator.timegrid import make_rng
from src.numerics.grid import BoundaryCondition, Grid2D, GridFunction, TwoGridPair, build_grid, build_two_grid

logger = logging.getLogger(__name__)

ScalarMap = Callable[[np.ndarray], np.ndarray]
SpaceTimeFunc = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
SpaceFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

TWO_PI = 2.0 * np.pi
# S(x,y) = sin(2πx) sin(2πy) は −Δ の固有関数（固有値 8π²）
EIGENVALUE = 2.0 * TWO_PI**2

SOURCE_CHECK_TOL = 1e-6


class ProblemError(ValueError):
    """問題設定関連のエラー"""


@dataclass(frozen=True)
class ProblemSpec:
    """
    問題設定

    u_t − cΔu = f(u) + g、初期値 u0、Dirichlet境界値 psi（周期なら None）。
    """
    name: str
    c: float
    f: ScalarMap = field(repr=False)
    f_prime: ScalarMap = field(repr=False)
    g: SpaceTimeFunc = field(repr=False)
    u0: SpaceFunc = field(repr=False)
    final_time: float
    bc: BoundaryCondition = BoundaryCondition.DIRICHLET
    psi: Optional[SpaceTimeFunc] = field(default=None, repr=False)
    exact: Optional[SpaceTimeFunc] = field(default=None, repr=False)
    lx: float = 1.0
    ly: float = 1.0
    x0: float = 0.0
    y0: float = 0.0
    epsilon: Optional[float] = None

    @property
    def is_periodic(self) -> bool:
        return self.bc == BoundaryCondition.PERIODIC

    @property
    def has_exact(self) -> bool:
        return self.exact is not None

    def build_grid(self, nx: int, ny: Optional[int] = None) -> Grid2D:
        """問題の領域上に格子を構築"""
        return build_grid(nx, ny or nx, self.lx, self.ly, self.bc, self.x0, self.y0)

    def build_two_grid(self, coarse_n: int, ratio: int) -> TwoGridPair:
        """問題の領域上に粗細格子ペアを構築"""
        return build_two_grid(coarse_n, coarse_n, ratio, ratio, self.lx, self.ly, self.bc, self.x0, self.y0)

    def initial(self, grid: Grid2D) -> GridFunction:
        return grid.sample(self.u0)

    def source(self, grid: Grid2D, t: float) -> GridFunction:
        return grid.sample(self.g, t)

    def boundary(self, grid: Grid2D, t: float) -> Optional[GridFunction]:
        """境界値（周期、または psi なしの場合は None）"""
        if self.is_periodic or self.psi is None:
            return None
        return grid.sample(self.psi, t)

    def exact_on(self, grid: Grid2D, t: float) -> GridFunction:
        if self.exact is None:
            raise ProblemError(f"問題 {self.name} には厳密解がありません")
        return grid.sample(self.exact, t)


def _zero_source(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(x)


def _sine_mode(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.sin(TWO_PI * x) * np.sin(TWO_PI * y)


def _cubic(u: np.ndarray) -> np.ndarray:
    return u - u**3


def _cubic_prime(u: np.ndarray) -> np.ndarray:
    return 1.0 - 3.0 * u**2


def manufactured(
    name: str,
    amplitude: Callable[[float], float],
    amplitude_prime: Callable[[float], float],
    c: float,
    f: ScalarMap,
    f_prime: ScalarMap,
    final_time: float,
) -> ProblemSpec:
    """
    製造解 u = a(t)·sin(2πx)sin(2πy) の問題を構築

    g = a'(t)S + 8π²c·a(t)S − f(a(t)S) を閉じた形で与えます。
    境界値は0です。
    """

    def exact(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        return amplitude(t) * _sine_mode(x, y)

    def source(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        s = _sine_mode(x, y)
        a = amplitude(t)
        return amplitude_prime(t) * s + EIGENVALUE * c * a * s - f(a * s)

    return ProblemSpec(
        name=name,
        c=c,
        f=f,
        f_prime=f_prime,
        g=source,
        u0=lambda x, y: exact(x, y, 0.0),
        final_time=final_time,
        bc=BoundaryCondition.DIRICHLET,
        psi=_zero_source,
        exact=exact,
    )


def _sine_series(terms: Sequence[tuple[float, float]]) -> tuple[Callable, Callable]:
    """a(t) = Σ A sin(kt) とその導関数"""

    def a(t: float) -> float:
        return sum(amp * np.sin(k * t) for amp, k in terms)

    def a_prime(t: float) -> float:
        return sum(amp * k * np.cos(k * t) for amp, k in terms)

    return a, a_prime


def case_I() -> ProblemSpec:
    """a(t) = 5 sin t + 2 sin 5t、c = 1、f = u − u³、T = π"""
    a, da = _sine_series([(5.0, 1.0), (2.0, 5.0)])
    return manufactured("case1", a, da, 1.0, _cubic, _cubic_prime, np.pi)


def case_II() -> ProblemSpec:
    """a(t) = 10 sin t + 5 sin 2t + 2 sin 5t + sin 10t"""
    a, da = _sine_series([(10.0, 1.0), (5.0, 2.0), (2.0, 5.0), (1.0, 10.0)])
    return manufactured("case2", a, da, 1.0, _cubic, _cubic_prime, np.pi)


def case_III() -> ProblemSpec:
    """a(t) = 10 sin t + 50 sin 2t + 30 sin 5t + 10 sin 10t（IMEXが発散する強い非線形）"""
    a, da = _sine_series([(10.0, 1.0), (50.0, 2.0), (30.0, 5.0), (10.0, 10.0)])
    return manufactured("case3", a, da, 1.0, _cubic, _cubic_prime, np.pi)


def sine_decay_problem() -> ProblemSpec:
    """c = 1/(8π²)、a(t) = sin t、T = 1（時間方向の収束検証用）"""
    return manufactured(
        "sec62", np.sin, np.cos, 1.0 / EIGENVALUE, _cubic, _cubic_prime, 1.0
    )


def _two_peak(t: float) -> float:
    return 1.0 + 20.0 * np.exp(-40.0 * (t - 1.0) ** 2) + 30.0 * np.exp(-60.0 * (t - 4.0) ** 2)


def _two_peak_prime(t: float) -> float:
    return (
        -1600.0 * (t - 1.0) * np.exp(-40.0 * (t - 1.0) ** 2)
        - 3600.0 * (t - 4.0) * np.exp(-60.0 * (t - 4.0) ** 2)
    )


def two_peak_problem() -> ProblemSpec:
    """c = 1、f = sin u、2つのガウス型ピークを持つ振幅、T = 4（適応刻み用）"""
    return manufactured("sec63", _two_peak, _two_peak_prime, 1.0, np.sin, np.cos, 4.0)


def four_bubble(epsilon: float) -> SpaceFunc:
    """4つの円形液滴の初期値"""
    radius_sq = 0.2**2

    def u0(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        centres = [(0.3, 0.0), (-0.3, 0.0), (0.0, 0.3), (0.0, -0.3)]
        value = -np.ones_like(x, dtype=float)
        for cx, cy in centres:
            value = value * np.tanh(((x - cx) ** 2 + (y - cy) ** 2 - radius_sq) / epsilon)
        return value

    return u0


def random_field(seed: int, lo: float = -0.05, amp: float = 0.1) -> SpaceFunc:
    """一様乱数の初期値 lo + amp·U(0,1)（格子形状ごとに同じシードで再現）"""

    def u0(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return lo + amp * make_rng(seed).random(np.shape(x))

    return u0


def allen_cahn(
    epsilon: float,
    initial: str = "four_bubble",
    seed: int = 0,
    domain: Optional[tuple[float, float, float, float]] = None,
    final_time: float = 100.0,
) -> ProblemSpec:
    """
    周期境界の Allen–Cahn 方程式 u_t − ε²Δu = u − u³

    Args:
        epsilon: 界面幅 ε
        initial: "four_bubble" または "random"
        seed: random 初期値のシード
        domain: (x0, y0, lx, ly)。省略時は four_bubble で (−1,1)²、random で (0,1)²
        final_time: 終端時刻

    Raises:
        ProblemError: epsilon が正でない、または initial が不明な場合
    """
    if epsilon <= 0:
        raise ProblemError(f"epsilon は正である必要があります: {epsilon}")
    if initial == "four_bubble":
        u0 = four_bubble(epsilon)
        default_domain = (-1.0, -1.0, 2.0, 2.0)
        name = "ac_bubbles"
    elif initial == "random":
        u0 = random_field(seed)
        default_domain = (0.0, 0.0, 1.0, 1.0)
        name = "ac_random"
    else:
        raise ProblemError(f"不明な初期値: {initial}")
    x0, y0, lx, ly = domain or default_domain
    return ProblemSpec(
        name=name,
        c=epsilon**2,
        f=_cubic,
        f_prime=_cubic_prime,
        g=_zero_source,
        u0=u0,
        final_time=final_time,
        bc=BoundaryCondition.PERIODIC,
        lx=lx,
        ly=ly,
        x0=x0,
        y0=y0,
        epsilon=epsilon,
    )


_CATALOG: dict[str, Callable[..., ProblemSpec]] = {
    "case1": case_I,
    "case2": case_II,
    "case3": case_III,
    "sec62": sine_decay_problem,
    "sec63": two_peak_problem,
    "ac_bubbles": lambda epsilon=0.02, **kw: allen_cahn(epsilon, "four_bubble", **kw),
    "ac_random": lambda epsilon=0.01, **kw: allen_cahn(epsilon, "random", **kw),
}

# 説明的な別名
_ALIASES: dict[str, str] = {
    "sine_decay": "sec62",
    "two_peak": "sec63",
}


def problem_names(aliases: bool = False) -> list[str]:
    """カタログ名の一覧（aliases=True なら別名も含める）"""
    names = list(_CATALOG)
    return names + list(_ALIASES) if aliases else names


def resolve_problem_name(name: str) -> str:
    """別名をカタログ名に解決（未知の名前はそのまま返す）"""
    return _ALIASES.get(name, name)


def get_problem(name: str, debug: bool = False, **params) -> ProblemSpec:
    """
    名前で問題を取得

    Args:
        name: カタログ名（case1|case2|case3|sec62|sec63|ac_bubbles|ac_random）
              または別名（sine_decay = sec62、two_peak = sec63）
        debug: True なら厳密解付き問題のソース項を自己検査
        **params: Allen–Cahn 用パラメータ（epsilon, seed, final_time）

    Raises:
        ProblemError: 名前が不明、またはソース項の自己検査に失敗した場合
    """
    key = resolve_problem_name(name)
    if key not in _CATALOG:
        raise ProblemError(f"不明な問題です: {name}（候補: {', '.join(problem_names(aliases=True))}）")
    try:
        problem = _CATALOG[key](**params)
    except TypeError as e:
        raise ProblemError(f"問題 {name} のパラメータが不正です: {e}") from e
    if debug and problem.has_exact:
        check_source_consistency(problem)
    return problem


def pde_residual(problem: ProblemSpec, x: np.ndarray, y: np.ndarray, t: float, h: float = 1e-3) -> np.ndarray:
    """
    厳密解の PDE 残差 u_t − cΔu − f(u) − g を4次精度差分で評価

    Raises:
        ProblemError: 厳密解がない場合
    """
    u = problem.exact
    if u is None:
        raise ProblemError(f"問題 {problem.name} には厳密解がありません")
    # 時間: (u₋₂ − 8u₋₁ + 8u₁ − u₂)/(12h)
    u_t = (u(x, y, t - 2 * h) - 8 * u(x, y, t - h) + 8 * u(x, y, t + h) - u(x, y, t + 2 * h)) / (12 * h)

    def second(shift: Callable[[float], np.ndarray]) -> np.ndarray:
        return (-shift(-2 * h) + 16 * shift(-h) - 30 * shift(0.0) + 16 * shift(h) - shift(2 * h)) / (12 * h**2)

    u_xx = second(lambda d: u(x + d, y, t))
    u_yy = second(lambda d: u(x, y + d, t))
    value = u(x, y, t)
    return u_t - problem.c * (u_xx + u_yy) - problem.f(value) - problem.g(x, y, t)


def check_source_consistency(
    problem: ProblemSpec, n_points: int = 100, seed: int = 0, tol: float = SOURCE_CHECK_TOL
) -> float:
    """
    ソース項 g が厳密解と整合するかを乱択点で検査

    Returns:
        float: 最大残差

    Raises:
        ProblemError: 残差が tol を超えた場合
    """
    rng = make_rng(seed)
    h = 1e-3
    x = problem.x0 + problem.lx * rng.random(n_points)
    y = problem.y0 + problem.ly * rng.random(n_points)
    t = 2 * h + (problem.final_time - 4 * h) * rng.random(n_points)
    # amplitude 関数はスカラー時刻を想定するため点ごとに評価
    residual = np.array(
        [pde_residual(problem, x[k : k + 1], y[k : k + 1], float(t[k]), h)[0] for k in range(n_points)]
    )
    worst = float(np.max(np.abs(residual)))
    if not worst < tol:
        raise ProblemError(f"問題 {problem.name} のソース項が整合しません: 最大残差 {worst:.3e}")
    logger.debug(f"ソース項自己検査: {problem.name}, 最大残差 {worst:.3e}")
    return worst
