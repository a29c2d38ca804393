"""Request/response bodies for the HTTP service.

Audio travels as float sample lists plus a rate; checkpoints are
referenced by server-side path.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import RunConfig


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ErrorBody(BaseModel):
    kind: str
    message: str


class HealthResponse(BaseModel):
    status: Literal["ok"] = "ok"
    version: str


class ResampleRequest(_Body):
    samples: list[float]
    rate: int
    target_rate: int


class AudioResponse(BaseModel):
    samples: list[float]
    rate: int


class ExtendRequest(_Body):
    samples: list[float]
    rate: int
    target_rate: int
    checkpoint: str


class ExtendResponse(AudioResponse):
    n_stages: int


class EvalRequest(_Body):
    ref: list[float]
    est: list[float]
    rate: int
    f_lo: float | None = None
    f_hi: float | None = None


class EvalResponse(BaseModel):
    lsd: float
    spectral_snr: float
    lsd_band: float | None = None


class BenchRequest(_Body):
    checkpoint: str
    src_rate: int
    tgt_rate: int
    n_clips: int = Field(default=2, ge=1)
    clip_seconds: float = Field(default=0.5, gt=0)
    repeats: int = Field(default=3, ge=1)
    threads: int = Field(default=1, ge=1)
    seed: int = 0


class BenchResponse(BaseModel):
    src_rate: int
    tgt_rate: int
    stage_lo: int
    stage_hi: int
    n_stages: int
    audio_seconds: float
    wall_seconds: float
    rtf: float
    threads: int
    repeats: int
    per_stage: dict[str, float]


class TrainRequest(_Body):
    config: RunConfig


class TrainStartResponse(BaseModel):
    job_id: str


class TrainStatus(BaseModel):
    job_id: str
    state: Literal["running", "done", "error"]
    steps_done: int
    total_steps: int
    last_metrics: dict | None = None
    checkpoint_path: str | None = None
    error: str | None = None


class CheckpointInfoRequest(_Body):
    path: str


class CheckpointInfoResponse(BaseModel):
    config: dict
    step: int
    n_parameters: int
    per_block: dict[str, int]
