"""Run configuration: a validated tree covering cascade, analysis,
optimizer, sampling schedule, loss weights, corpus source, and output
paths.  Defaults are the published full-scale values; ``desk_preset``
shrinks everything to single-CPU scale.

Files are YAML with nested sections mirroring the model tree; unknown
keys are rejected by name.
"""

from __future__ import annotations

from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import DataError, InvalidArgumentError
from .losses import LossWeights
from .model import BlockConfig, CascadeConfig
from .schedule import OptimizerConfig, TeacherForcingSchedule


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StftSection(_Section):
    n_fft: int = 1024
    win_len: int = 320
    hop: int = 80


class CascadeSection(_Section):
    rates: list[int] = Field(default=[8000, 12000, 16000, 24000, 48000])
    hidden: int = 512
    n_convnext: int = 2
    expansion: int = 3
    dw_kernel: int = 7
    io_kernel: int = 3


class OptimizerSection(_Section):
    lr0: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay_per_epoch: float = 0.999
    batch_size: int = 16
    clip_len: int = 8000


class TeacherForcingSection(_Section):
    initial_ratio: float = 0.75
    decay: float = 0.999995


class LossSection(_Section):
    w_amp: float = 45.0
    w_phase: float = 100.0
    w_complex: float = 22.5
    w_adv: float = 1.0


class DiscriminatorSection(_Section):
    wave_channel_cap: int = 1024
    spectral_channels: list[int] = Field(default=[32, 32, 32, 32])


class SyntheticCorpusSection(_Section):
    n_clips: int = 64
    duration: float = 0.5
    seed: int = 0


class CorpusSection(_Section):
    source: Literal["synthetic", "wav_dir"] = "synthetic"
    wav_dir: str | None = None
    split_ratio: float = 0.9
    synthetic: SyntheticCorpusSection = Field(default_factory=SyntheticCorpusSection)

    @model_validator(mode="after")
    def _check_source(self):
        if self.source == "wav_dir" and not self.wav_dir:
            raise ValueError("corpus.source is 'wav_dir' but corpus.wav_dir is unset")
        return self


class TrainSection(_Section):
    steps: int = 500_000
    seed: int = 0
    deterministic: bool = False
    checkpoint_dir: str = "runs/default"
    checkpoint_interval: int = 0
    metrics_path: str | None = None
    resume: str | None = None
    log_every: int = 50


class RunConfig(_Section):
    cascade: CascadeSection = Field(default_factory=CascadeSection)
    stft: StftSection = Field(default_factory=StftSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    teacher_forcing: TeacherForcingSection = Field(default_factory=TeacherForcingSection)
    loss: LossSection = Field(default_factory=LossSection)
    discriminator: DiscriminatorSection = Field(default_factory=DiscriminatorSection)
    corpus: CorpusSection = Field(default_factory=CorpusSection)
    train: TrainSection = Field(default_factory=TrainSection)

    # ---- bridges into the runtime types -------------------------------
    def cascade_config(self) -> CascadeConfig:
        from .dsp import StftConfig

        stft = StftConfig(n_fft=self.stft.n_fft, win_len=self.stft.win_len,
                          hop=self.stft.hop)
        block = BlockConfig(freq_bins=stft.n_bins, hidden=self.cascade.hidden,
                            n_convnext=self.cascade.n_convnext,
                            expansion=self.cascade.expansion,
                            dw_kernel=self.cascade.dw_kernel,
                            io_kernel=self.cascade.io_kernel)
        return CascadeConfig(rates=tuple(self.cascade.rates), stft=stft, block=block)

    def optimizer_config(self) -> OptimizerConfig:
        o = self.optimizer
        return OptimizerConfig(lr0=o.lr0, beta1=o.beta1, beta2=o.beta2,
                               weight_decay=o.weight_decay,
                               lr_decay_per_epoch=o.lr_decay_per_epoch,
                               batch_size=o.batch_size, clip_len=o.clip_len)

    def loss_weights(self) -> LossWeights:
        w = self.loss
        return LossWeights(w_amp=w.w_amp, w_phase=w.w_phase,
                           w_complex=w.w_complex, w_adv=w.w_adv)

    def tf_schedule(self) -> TeacherForcingSchedule:
        return TeacherForcingSchedule(initial_ratio=self.teacher_forcing.initial_ratio,
                                      decay=self.teacher_forcing.decay)


def desk_preset() -> RunConfig:
    """Single-CPU scale: a 3-rate ladder, narrow blocks, small critics,
    a short synthetic corpus, and a few hundred steps."""
    cfg = RunConfig()
    cfg.cascade.rates = [8000, 16000, 48000]
    cfg.cascade.hidden = 64
    cfg.optimizer.batch_size = 8
    cfg.discriminator.wave_channel_cap = 64
    cfg.discriminator.spectral_channels = [2, 4, 4, 4]
    cfg.corpus.synthetic.n_clips = 64
    cfg.corpus.synthetic.duration = 8000 / 48000
    cfg.train.steps = 500
    cfg.train.checkpoint_dir = "runs/desk"
    return cfg


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def config_from_dict(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise InvalidArgumentError(f"invalid config: {_format_validation_error(exc)}") from exc


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise DataError(f"config {path} must hold a mapping, got {type(raw).__name__}")
    return config_from_dict(raw)


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)
