"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SplitRequest(StrictModel):
    dataset_dir: str
    bias: Literal["nodes", "edges", "density"] = "nodes"
    cmp: Literal["lt", "gt"] = "lt"
    threshold: float | None = None
    qualify_count: int | None = Field(default=None, gt=0)
    train_count: int = Field(gt=0)
    val_count: int = Field(gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _exactly_one_selector(self):
        if (self.threshold is None) == (self.qualify_count is None):
            raise ValueError("provide exactly one of threshold / qualify_count")
        return self


class SplitStatsResponse(StrictModel):
    manifest: dict[str, Any]


class TrainRequest(SplitRequest):
    method: Literal["erm", "oodgmixup"] = "oodgmixup"
    epochs: int = Field(default=200, gt=0)
    lr: float = Field(default=0.001, gt=0)
    batch: int = Field(default=32, gt=0)
    hidden: int = Field(default=64, gt=0)
    layers: int = Field(default=2, ge=1, le=3)
    embed_dim: int = Field(default=64, gt=0)
    alpha: float = Field(default=2.0, gt=0)
    beta: float = Field(default=2.0, gt=0)
    tail: int = Field(default=20, gt=0)
    patience: int = Field(default=20, gt=0)


JobState = Literal["queued", "running", "done", "failed"]


class JobCreated(StrictModel):
    job_id: str
    status: JobState


class JobStatus(StrictModel):
    job_id: str
    status: JobState
    error: str | None = None
    error_kind: Literal["config", "runtime"] | None = None
    has_report: bool = False


class JobReport(StrictModel):
    job_id: str
    status: JobState
    error: str | None = None
    error_kind: Literal["config", "runtime"] | None = None
    report: dict[str, Any] | None = None


class EvtFitRequest(StrictModel):
    values: list[float] = Field(min_length=1)
    tail: int = Field(default=20, gt=0)


class EvtFitResponse(StrictModel):
    valid: bool
    mu: float
    sigma: float
    xi: float
    tail_size: int
    log_likelihood: float | None


class GradcheckRequest(StrictModel):
    probes: int = Field(default=30, gt=0)
    h: float = Field(default=1e-5, gt=0)
    seed: int = 0
    tolerance: float = Field(default=1e-4, gt=0)


class GradcheckResponse(StrictModel):
    report: dict[str, Any]


class HealthResponse(StrictModel):
    status: str
    version: str
