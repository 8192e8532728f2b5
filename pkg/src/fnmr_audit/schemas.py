from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, model_validator

from .ftest import DEFAULT_ALPHA, DEFAULT_REPLICATES


class DecisionRecordModel(BaseModel):
    subject_id: str
    group_id: str
    attempt_index: int = Field(ge=1)
    decision: Literal[0, 1]


class StudyInput(BaseModel):
    """Decisions either as JSON records or as canonical CSV text."""

    records: Optional[list[DecisionRecordModel]] = None
    csv_text: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.records is None) == (self.csv_text is None):
            raise ValueError("provide exactly one of 'records' or 'csv_text'")
        return self


class BootstrapRequest(StudyInput):
    replicates: int = Field(DEFAULT_REPLICATES, ge=1)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    seed: int = Field(ge=0, lt=2**64)
    threads: int = Field(1, ge=1)


class AnalyzeRequest(BootstrapRequest):
    include_reference: bool = False


class MoeRequest(BootstrapRequest):
    include_phi: bool = False


class GroupEstimatesModel(BaseModel):
    group_id: str
    pi_hat: float
    rho_hat: float
    m0: float
    n_pi: int
    n_subjects: int
    var_pi_hat: float
    degenerate: bool
    rho_estimable: bool


class FTestResponse(BaseModel):
    f_observed: float
    p_value: float
    alpha: float
    K: int
    seed: int
    pooled_pi_hat: float
    reject_at_alpha: bool
    groups: list[GroupEstimatesModel]
    degenerate_replicates: int
    f_reference: Optional[list[Optional[float]]] = None


class GroupFlagModel(BaseModel):
    group_id: str
    pi_hat: float
    flagged: bool


class MoeResponse(BaseModel):
    pooled_pi_hat: float
    margin: float
    interval: tuple[float, float]
    groups: list[GroupFlagModel]
    alpha: float
    K: int
    seed: int
    phi_distribution: Optional[list[float]] = None


class SimCellRequest(BaseModel):
    pi: float = Field(gt=0, lt=1)
    rho: float = Field(ge=0, lt=1)
    n: int = Field(ge=1)
    m: int = Field(ge=1)
    G: int = Field(ge=1)
    R: int = Field(1000, ge=1)
    K: int = Field(DEFAULT_REPLICATES, ge=1)
    alpha: float = Field(DEFAULT_ALPHA, gt=0, lt=1)
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(1, ge=1)


class SimCellResponse(BaseModel):
    pi: float
    rho: float
    n: int
    m: int
    G: int
    R: int
    K: int
    alpha: float
    p50: float
    p75: float
    p80: float
    p90: float
    p95: float
    p975: float
    mean_M: float
    seed: int


class ErrorResponse(BaseModel):
    detail: str
    terms: Optional[dict[str, float]] = None
