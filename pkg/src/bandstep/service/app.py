"""HTTP service wrapping the engine: resampling, bandwidth extension,
metrics, benchmarking, and background training jobs.

Inference endpoints are synchronous and safe to call concurrently
(parameters are read-only).  Training mutates parameters, so at most one
training job runs at a time; further requests get 409 until it
finishes.  Domain errors map to JSON ``{kind, message}`` bodies.
"""

from __future__ import annotations

import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..checkpoint import load_checkpoint, load_model, model_tensors
from ..config import RunConfig, desk_preset
from ..data import SynthCorpusSpec, synth_corpus
from ..dsp import Waveform, sinc_resample
from ..errors import (
    BandstepError,
    CheckpointError,
    DataError,
    InvalidArgumentError,
    NumericError,
)
from ..metrics import LsdConfig, lsd, lsd_band, spectral_snr
from ..model import CascadeModel, extend_waveform
from ..bench import rtf_benchmark
from . import schemas

_STATUS = {
    InvalidArgumentError: (400, "invalid_argument"),
    CheckpointError: (422, "checkpoint_error"),
    DataError: (422, "data_error"),
    NumericError: (500, "numeric_error"),
}


class _TrainJob:
    def __init__(self, job_id: str, total_steps: int):
        self.job_id = job_id
        self.total_steps = total_steps
        self.state = "running"
        self.steps_done = 0
        self.last_metrics: dict | None = None
        self.checkpoint_path: str | None = None
        self.error: str | None = None

    def status(self) -> schemas.TrainStatus:
        return schemas.TrainStatus(
            job_id=self.job_id, state=self.state, steps_done=self.steps_done,
            total_steps=self.total_steps, last_metrics=self.last_metrics,
            checkpoint_path=self.checkpoint_path, error=self.error)


def _load_model_cached(cache: dict, path: str) -> CascadeModel:
    """Reuse a loaded model while the file is unchanged on disk."""
    try:
        stat = os.stat(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    key = (os.path.abspath(path), stat.st_mtime_ns, stat.st_size)
    if key not in cache:
        cache.clear()  # hold at most one model
        cache[key] = load_model(path)[0]
    return cache[key]


def create_app() -> FastAPI:
    app = FastAPI(title="bandstep", version=__version__)
    jobs: dict[str, _TrainJob] = {}
    jobs_lock = threading.Lock()
    train_lock = threading.Lock()  # exclusive: one training job at a time
    model_cache: dict = {}

    @app.exception_handler(BandstepError)
    async def _domain_error(request: Request, exc: BandstepError):
        for cls in type(exc).__mro__:
            if cls in _STATUS:
                code, kind = _STATUS[cls]
                return JSONResponse(status_code=code,
                                    content={"kind": kind, "message": str(exc)})
        return JSONResponse(status_code=500,
                            content={"kind": "internal", "message": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(version=__version__)

    @app.get("/config/default", response_model=RunConfig)
    def config_default():
        return RunConfig()

    @app.get("/config/desk", response_model=RunConfig)
    def config_desk():
        return desk_preset()

    @app.post("/resample", response_model=schemas.AudioResponse)
    def resample(req: schemas.ResampleRequest):
        wav = Waveform(np.asarray(req.samples, dtype=np.float64), req.rate)
        out = sinc_resample(wav, req.target_rate)
        return schemas.AudioResponse(samples=out.samples.tolist(), rate=out.rate)

    @app.post("/extend", response_model=schemas.ExtendResponse)
    def extend(req: schemas.ExtendRequest):
        model = _load_model_cached(model_cache, req.checkpoint)
        wav = Waveform(np.asarray(req.samples, dtype=np.float64), req.rate)
        out = extend_waveform(model, wav, req.rate, req.target_rate)
        config = model.config
        n = config.stage_index(req.target_rate) - config.stage_index(req.rate)
        return schemas.ExtendResponse(samples=out.samples.tolist(),
                                      rate=out.rate, n_stages=n)

    @app.post("/eval", response_model=schemas.EvalResponse)
    def evaluate(req: schemas.EvalRequest):
        ref = Waveform(np.asarray(req.ref, dtype=np.float64), req.rate)
        est = Waveform(np.asarray(req.est, dtype=np.float64), req.rate)
        cfg = LsdConfig()
        band = None
        if req.f_lo is not None or req.f_hi is not None:
            if req.f_lo is None or req.f_hi is None:
                raise InvalidArgumentError("band evaluation needs both f_lo and f_hi")
            band = lsd_band(ref, est, cfg, req.f_lo, req.f_hi)
        return schemas.EvalResponse(lsd=lsd(ref, est, cfg),
                                    spectral_snr=spectral_snr(ref, est, cfg),
                                    lsd_band=band)

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest):
        model = _load_model_cached(model_cache, req.checkpoint)
        clips = synth_corpus(SynthCorpusSpec(
            n_clips=req.n_clips, duration=req.clip_seconds, rate=req.src_rate,
            seed=req.seed))
        report = rtf_benchmark(model, req.src_rate, req.tgt_rate, clips,
                               repeats=req.repeats, threads=req.threads)
        return schemas.BenchResponse(
            src_rate=report.src_rate, tgt_rate=report.tgt_rate,
            stage_lo=report.stage_lo, stage_hi=report.stage_hi,
            n_stages=report.n_stages, audio_seconds=report.audio_seconds,
            wall_seconds=report.wall_seconds, rtf=report.rtf,
            threads=report.threads, repeats=report.repeats,
            per_stage=report.per_stage)

    @app.post("/train", response_model=schemas.TrainStartResponse, status_code=202)
    def train_start(req: schemas.TrainRequest):
        from ..train import train_from_config

        if not train_lock.acquire(blocking=False):
            return JSONResponse(status_code=409, content={
                "kind": "busy",
                "message": "a training job is already running"})
        job = _TrainJob(uuid.uuid4().hex, req.config.train.steps)
        with jobs_lock:
            jobs[job.job_id] = job

        def worker():
            try:
                def on_metrics(m):
                    job.steps_done += 1
                    job.last_metrics = m

                result = train_from_config(req.config, on_metrics=on_metrics)
                job.checkpoint_path = result.checkpoint_path
                job.state = "done"
            except Exception as exc:  # surfaced through the status endpoint
                job.error = f"{type(exc).__name__}: {exc}"
                job.state = "error"
            finally:
                train_lock.release()

        threading.Thread(target=worker, daemon=True).start()
        return schemas.TrainStartResponse(job_id=job.job_id)

    @app.get("/train/{job_id}", response_model=schemas.TrainStatus)
    def train_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={
                "kind": "not_found", "message": f"no training job {job_id!r}"})
        return job.status()

    @app.post("/checkpoint/info", response_model=schemas.CheckpointInfoResponse)
    def checkpoint_info(req: schemas.CheckpointInfoRequest):
        from ..model import config_to_dict

        ckpt = load_checkpoint(req.path)
        model = CascadeModel(ckpt.config)
        model.load_state(model_tensors(ckpt))
        per_block = {f"block.{i}": b.num_parameters()
                     for i, b in enumerate(model.blocks)}
        return schemas.CheckpointInfoResponse(
            config=config_to_dict(ckpt.config), step=ckpt.step,
            n_parameters=model.num_parameters(), per_block=per_block)

    return app
