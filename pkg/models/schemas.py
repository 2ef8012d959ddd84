from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator


class RunConfig(BaseModel):
    command: str
    mode: str = Field("circuit", description="bitflip or circuit")
    d: List[int] = Field(default_factory=list)
    T: Optional[int] = Field(None, ge=1, description="Rounds; defaults to d for circuit runs")
    p: List[float] = Field(default_factory=list)
    schedule: Optional[str] = None
    shots: Optional[int] = Field(None, ge=1)
    ci_target: Optional[float] = Field(None, gt=0)
    ci_mode: str = Field("relative", description="absolute or relative CI half-width target")
    max_shots: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    backend: Optional[str] = None
    include_stage1_weight: bool = False
    out: Optional[str] = None
    extra: Dict[str, str] = Field(default_factory=dict)

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v):
        v = v.strip().lower()
        if v not in ("bitflip", "circuit"):
            raise ValueError("mode must be 'bitflip' or 'circuit'")
        return v

    @field_validator("ci_mode")
    @classmethod
    def validate_ci_mode(cls, v):
        v = v.strip().lower()
        if v not in ("absolute", "relative"):
            raise ValueError("ci_mode must be 'absolute' or 'relative'")
        return v


class FailureEstimate(BaseModel):
    d: int
    T: int
    p: float
    schedule: Optional[str] = None
    basis: str = Field(..., description="Z, X, or ZX for the summed estimate")
    shots: int = Field(..., ge=0)
    failures: int = Field(..., ge=0)
    pfail: float
    ci_low: float
    ci_high: float
    seed: int = 0
    budget_exhausted: bool = False
    components: Dict[str, "FailureEstimate"] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_interval(self):
        if not self.ci_low <= self.pfail <= self.ci_high:
            raise ValueError("confidence interval must contain the point estimate")
        return self

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2


FailureEstimate.model_rebuild()


class DecodeResult2D(BaseModel):
    predictions: Dict[str, List[int]]
    weights: Dict[str, int]
    chosen_color: str
    prediction: List[int]


class DecodeResultCL(BaseModel):
    corrections: Dict[str, int] = Field(..., description="Per color observable correction, +1 or -1")
    weights: Dict[str, float]
    chosen_color: str
    correction: int


class ScheduleDiagnostics(BaseModel):
    schedule: str
    valid: bool
    length: int
    conflicts: List[str] = Field(default_factory=list)
    interference: List[str] = Field(default_factory=list)
    nondeterministic: List[str] = Field(default_factory=list)
    messages: List[str] = Field(default_factory=list)


class DecompositionReport(BaseModel):
    color: str
    separated_mechanisms: int
    restricted_mechanisms: int
    only_mechanisms: int
    virtual_detectors: int
    dropped_restricted: int = Field(0, description="Mechanisms with more than two non-c detectors")
    dropped_only_hyperedge: int = Field(0, description="c-only mechanisms with more than two detectors")
    dropped_only_mixed: int = Field(0, description="Mechanisms with more than one c detector next to non-c detectors")


class RegressionLine(BaseModel):
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    slope_ci: List[float]
    intercept_ci: List[float]
    n_points: int


class AnsatzFit(BaseModel):
    per_distance: Dict[int, RegressionLine]
    slope_fit: RegressionLine
    intercept_fit: RegressionLine
    d0: int
    p_star: Optional[float] = None
    alpha: Optional[float] = None
    beta: float
    eta: float
    degenerate: bool = False


class CrossingEstimate(BaseModel):
    d1: int
    d2: int
    T: Optional[int] = None
    p_cross: float


class ThresholdEstimate(BaseModel):
    crossings: List[CrossingEstimate] = Field(default_factory=list)
    p_threshold: Optional[float] = None
    p_threshold_se: Optional[float] = None
    slope_A: Optional[float] = None


class LongTermFit(BaseModel):
    p_longterm: float
    gamma: float
    p_first: float
    cost: float
    iterations: int
    converged: bool


class FitReport(BaseModel):
    artifact: str
    version: str
    config: RunConfig
    ansatz: Optional[AnsatzFit] = None
    thresholds: Dict[str, ThresholdEstimate] = Field(default_factory=dict)
    longterm: Optional[LongTermFit] = None
    bias: Dict[str, float] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
