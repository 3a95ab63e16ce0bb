"""Request/response models for the workflow service."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

__all__ = [
    "WorkflowRequest",
    "IdentifyRequest",
    "GenDataResponse",
    "TrainResponse",
    "CalibrateResponse",
    "DetectResponse",
    "IdentifyResponse",
    "MtdResponse",
    "RunCycleResponse",
    "EvaluateResponse",
    "RocResponse",
    "ReportResponse",
    "ErrorBody",
]


class WorkflowRequest(BaseModel):
    """Common shape: a config (by path or inline), a seed override, an
    artifact directory on the service host."""

    config_path: str | None = None
    config: dict | None = None
    seed: int | None = Field(default=None, ge=0)
    out_dir: str

    @model_validator(mode="after")
    def _one_config_source(self):
        if self.config_path is not None and self.config is not None:
            raise ValueError("pass config_path or an inline config, not both")
        return self


class IdentifyRequest(WorkflowRequest):
    step: int | None = Field(default=None, ge=0,
                             description="stream step to identify; default: first alarm")


class GenDataResponse(BaseModel):
    dataset: str
    n_steps: int
    n_skipped: int
    case: str


class TrainResponse(BaseModel):
    model: str
    history: str
    epochs_run: int
    best_epoch: int
    final_train_loss: float
    final_val_loss: float


class CalibrateResponse(BaseModel):
    model: str
    calibration: str
    tau: float
    target_fpr: float
    achieved_fpr: float
    n_windows: int


class DetectResponse(BaseModel):
    detections: str
    n_windows: int
    n_alarms: int
    alarm_rate: float
    n_attacked: int


class IdentifyResponse(BaseModel):
    identification: str
    step: int
    dataset_index: int
    attacked: bool
    ok: bool
    iterations: int
    loss: float | None = None
    bypass_bdd: bool | None = None
    bypass_ae: bool | None = None
    contains_zero: bool | None = None
    center_norm: float | None = None
    error: str | None = None


class MtdResponse(BaseModel):
    mtd: str
    degenerate: bool
    applied: bool
    omega_star: float | None = None
    phi_star: float | None = None
    omega_floor: float | None = None
    effectiveness: float | None = None
    hiddenness: float | None = None
    best_effort: bool | None = None
    used_fallback: bool | None = None
    ratio_avg: float | None = None
    ratio_max: float | None = None


class RunCycleResponse(BaseModel):
    episodes: str
    n_steps: int
    n_attacked: int
    n_triggers: int
    n_failures: int
    wall_s: float


class EvaluateResponse(BaseModel):
    metrics: str
    plots: list[str]
    n_steps: int
    n_triggers: int
    trigger_rate: float
    adp: float | None = None
    dhp: float | None = None
    end_to_end_fpr: float | None = None
    detector_fpr: float | None = None
    detector_tpr: float | None = None
    ratio_avg: float | None = None
    baseline_ratio: float | None = None


class RocResponse(BaseModel):
    roc: str
    plots: list[str]
    auc: float
    n_windows: int
    operating: dict | None = None


class ReportResponse(BaseModel):
    report: str
    sections: list[str]


class ErrorBody(BaseModel):
    error: str       # "config" | "component"
    message: str
