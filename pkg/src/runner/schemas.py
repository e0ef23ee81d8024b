# -*- coding: utf-8 -*-
"""
twogridcdm - 実験設定スキーマ

Pydanticベースの実験設定（JSON）と結果行のスキーマを定義します。
"""

from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from src.integrator.schemes import SchemeKind
from src.integrator.timegrid import DEFAULT_R_MAX, RATIO_BOUND, AdaptiveIndicator
from src.problems.catalog import problem_names


class TemporalKind(str, Enum):
    """時間格子の種類"""
    UNIFORM = "uniform"
    RANDOM = "random"
    ADAPTIVE = "adaptive"


class StudyKind(str, Enum):
    """収束次数を計算する方向"""
    SPACE = "space"
    TIME = "time"


class TemporalSpec(BaseModel):
    """時間格子の指定"""
    kind: TemporalKind = Field(TemporalKind.UNIFORM, description="uniform | random | adaptive")
    seed: int = Field(0, ge=0, description="乱数格子のシード")
    tau_min: Optional[float] = Field(None, gt=0)
    tau_max: Optional[float] = Field(None, gt=0)
    eta: Optional[float] = Field(None, ge=0)
    r_max: float = Field(DEFAULT_R_MAX, gt=1.0, lt=RATIO_BOUND)
    indicator: AdaptiveIndicator = AdaptiveIndicator.SOLUTION

    @model_validator(mode="after")
    def check_adaptive(self) -> "TemporalSpec":
        """適応格子には tau_max と eta が必要"""
        if self.kind == TemporalKind.ADAPTIVE and (self.tau_max is None or self.eta is None):
            raise ValueError("adaptive には tau_max と eta が必要です")
        return self


class ResolutionRow(BaseModel):
    """表の1行分の解像度"""
    n_fine: int = Field(..., ge=4, description="空間分割数 N_h（各方向）")
    n_time: Optional[int] = Field(None, ge=1, description="時間ステップ数 N（uniform/random）")
    n_coarse: Optional[int] = Field(None, ge=4, description="粗格子分割数（省略時 N_h/M）")
    tau_min: Optional[float] = Field(None, gt=0, description="適応格子の最小刻み（行ごと）")
    temporal: Optional[TemporalSpec] = Field(None, description="この行だけの時間格子指定")
    schemes: Optional[list[SchemeKind]] = Field(None, description="この行だけのスキーム指定")


class ExperimentConfig(BaseModel):
    """実験設定"""
    name: str = Field(..., min_length=1, max_length=200)
    problem: str = Field(..., description="問題カタログ名")
    problem_params: dict[str, Any] = Field(default_factory=dict)
    schemes: list[SchemeKind] = Field(default_factory=lambda: [SchemeKind.NONLINEAR], min_length=1)
    study: StudyKind = StudyKind.SPACE
    ratio: int = Field(10, ge=2, description="粗細格子比 M")
    temporal: TemporalSpec = Field(default_factory=TemporalSpec)
    rows: list[ResolutionRow] = Field(..., min_length=1)
    final_time: Optional[float] = Field(None, gt=0)
    expect_divergence: bool = False
    seed: Optional[int] = Field(None, ge=0, description="乱数初期値のシード")
    snapshot_times: list[float] = Field(default_factory=list)
    startup_time: float = Field(0.0, ge=0)
    newton_tol: Optional[float] = Field(None, gt=0)
    linear_method: Optional[str] = None
    output_dir: Optional[str] = None

    @field_validator("problem")
    @classmethod
    def validate_problem(cls, v: str) -> str:
        """問題名を検証"""
        names = problem_names(aliases=True)
        if v not in names:
            raise ValueError(f"無効な問題: {v}。有効値: {names}")
        return v

    @model_validator(mode="after")
    def check_rows(self) -> "ExperimentConfig":
        """行ごとの整合性を検証"""
        for k, row in enumerate(self.rows):
            temporal = self.temporal_for(row)
            if temporal.kind != TemporalKind.ADAPTIVE and row.n_time is None:
                raise ValueError(f"行 {k}: uniform/random には n_time が必要です")
            if temporal.kind == TemporalKind.ADAPTIVE and row.tau_min is None and temporal.tau_min is None:
                raise ValueError(f"行 {k}: adaptive には tau_min が必要です")
            if temporal.kind == TemporalKind.RANDOM and row.n_time is not None and row.n_time < 2:
                raise ValueError(f"行 {k}: random には n_time ≥ 2 が必要です")
            if SchemeKind.TWO_GRID in self.schemes_for(row):
                coarse = row.n_coarse if row.n_coarse is not None else row.n_fine // self.ratio
                if coarse * self.ratio != row.n_fine:
                    raise ValueError(f"行 {k}: N_h={row.n_fine} は粗格子 {coarse} × M={self.ratio} と一致しません")
                if coarse < 4:
                    raise ValueError(f"行 {k}: 粗格子が小さすぎます: {coarse}")
        return self

    def coarse_size(self, row: ResolutionRow) -> int:
        return row.n_coarse if row.n_coarse is not None else row.n_fine // self.ratio

    def temporal_for(self, row: ResolutionRow) -> TemporalSpec:
        return row.temporal or self.temporal

    def schemes_for(self, row: ResolutionRow) -> list[SchemeKind]:
        return row.schemes or self.schemes


class ConvergenceRow(BaseModel):
    """収束表の1行"""
    scheme: SchemeKind
    temporal: TemporalKind = TemporalKind.UNIFORM
    n_time: Optional[int] = None
    tau_min: Optional[float] = Field(None, description="適応格子の最小刻み")
    n_fine: int
    n_coarse: Optional[int] = None
    steps: int = 0
    max_ratio: Optional[float] = None
    error: Optional[float] = Field(None, description="終端時刻の離散L2誤差（発散時は None）")
    order: Optional[float] = None
    cpu_time: float = 0.0
    diverged: bool = False
    newton_iters: int = 0
    linear_iters: int = 0

    @property
    def error_label(self) -> str:
        if self.diverged or self.error is None:
            return "Inf"
        return f"{self.error:.6e}"

    @property
    def series(self) -> str:
        """収束次数を計算する系列（スキームと時間格子の組）"""
        return f"{self.scheme.value}_{self.temporal.value}"


class AllenCahnSummary(BaseModel):
    """Allen–Cahn 計算のまとめ"""
    scheme: SchemeKind
    label: str
    steps: int
    final_time: float
    initial_energy: float
    final_energy: float
    energy_increase_max: float = Field(..., description="1ステップあたりのエネルギー増加の最大値")
    tau_min_used: float
    tau_max_used: float
    max_ratio: float
    cpu_time: float
    diverged: bool = False
    energy_csv: Optional[str] = None
    snapshots: list[str] = Field(default_factory=list)
