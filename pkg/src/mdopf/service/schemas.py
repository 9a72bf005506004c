"""Pydantic request/response models of the solver service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

ModelName = Literal["lp-d-e", "lp-d", "ac-d-e", "ac-d", "ac-w-e"]


class FeederRequest(BaseModel):
    feeder: dict = Field(description="Feeder document (same schema as the JSON files)")


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[ViolationRow]


class ViolationRow(BaseModel):
    element: str
    message: str


class SolveRequest(FeederRequest):
    model: ModelName
    tol: float = 1e-10
    max_iter: int = 200
    linearization_point: float = 1.0


class BusRow(BaseModel):
    bus: str
    phase: str
    vm_pu: float
    va_deg: Optional[float] = None
    w_pu: float


class LoadRow(BaseModel):
    load: str
    phase: str
    pd_pu: float
    qd_pu: float
    pb_pu: float
    qb_pu: float


class LimitRow(BaseModel):
    bus: str
    phase: str
    w: float
    lo: float
    hi: float
    amount: float


class SolveResponse(BaseModel):
    model: ModelName
    objective: float
    converged: bool
    iterations: int = 0
    max_mismatch: Optional[float] = None
    s_slack: list[list[float]]  # three [re, im] pairs
    buses: list[BusRow]
    loads: list[LoadRow]
    limit_violations: list[LimitRow]


class CompareRequest(FeederRequest):
    name: str = "feeder"
    models: list[ModelName] = list(ModelName.__args__)


class CompareRow(BaseModel):
    feeder: str
    model: ModelName
    objective: Optional[float] = None
    dw_pct: Optional[float] = None
    dpb_pct: Optional[float] = None
    dqb_pct: Optional[float] = None
    dobj_pct: Optional[float] = None
    iters: int = 0
    ms: float = 0.0
    converged: bool = False
    error: Optional[str] = None


class CompareResponse(BaseModel):
    records: list[CompareRow]


class ExponentSweepRequest(FeederRequest):
    alphas: list[float]


class ExponentRow(BaseModel):
    alpha: float
    obj_lp: Optional[float] = None
    obj_ac: Optional[float] = None
    converged_ac: bool = False
    error: Optional[str] = None


class ExponentSweepResponse(BaseModel):
    records: list[ExponentRow]


class VufSweepRequest(FeederRequest):
    targets: list[float]
    samples: int = 100
    seed: int = 0


class VufSampleRow(BaseModel):
    target_vuf: float
    sample: int
    dw_pct: Optional[float] = None
    converged: bool


class VufSummaryRow(BaseModel):
    target_vuf: float
    stat: str
    dw_pct: Optional[float] = None
    n_converged: int


class VufSweepResponse(BaseModel):
    records: list[VufSampleRow]
    summaries: list[VufSummaryRow]


class VrefSweepRequest(FeederRequest):
    factors: list[float]


class VrefRow(BaseModel):
    m: float
    dw_pct: Optional[float] = None
    converged_lp: bool
    converged_ac: bool


class VrefSweepResponse(BaseModel):
    records: list[VrefRow]


class HealthResponse(BaseModel):
    status: str
    version: str


ValidateResponse.model_rebuild()
