"""Real-time-factor benchmark: end-to-end waveform-to-waveform timing
(resampling, analysis, cascade, synthesis all included), median over
repeats with warm-up excluded.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from .dsp import Waveform
from .errors import InvalidArgumentError
from .model import CascadeModel, extend_waveform


@dataclass
class RtfReport:
    """One benchmark run's result."""

    src_rate: int
    tgt_rate: int
    stage_lo: int
    stage_hi: int
    audio_seconds: float
    wall_seconds: float
    threads: int
    repeats: int
    per_stage: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_stages < 1:
            raise InvalidArgumentError("a benchmark covers at least one stage")
        if self.wall_seconds <= 0 or self.audio_seconds <= 0:
            raise InvalidArgumentError("durations must be positive")

    @property
    def n_stages(self) -> int:
        return self.stage_hi - self.stage_lo

    @property
    def rtf(self) -> float:
        return self.wall_seconds / self.audio_seconds

    def as_text(self) -> str:
        lines = [
            f"stage_pair: {self.stage_lo} -> {self.stage_hi}",
            f"rates: {self.src_rate} Hz -> {self.tgt_rate} Hz",
            f"n_stages: {self.n_stages}",
            f"audio_seconds: {self.audio_seconds:.4f}",
            f"wall_seconds: {self.wall_seconds:.4f}",
            f"rtf: {self.rtf:.4f}",
            f"threads: {self.threads}",
            f"repeats: {self.repeats}",
        ]
        total = sum(self.per_stage.values())
        for key in sorted(self.per_stage):
            share = self.per_stage[key] / total if total > 0 else 0.0
            lines.append(f"time.{key}: {self.per_stage[key]:.4f} ({share:.1%})")
        return "\n".join(lines)

    def as_json(self) -> str:
        record = {
            "stage_lo": self.stage_lo, "stage_hi": self.stage_hi,
            "src_rate": self.src_rate, "tgt_rate": self.tgt_rate,
            "n_stages": self.n_stages,
            "audio_seconds": self.audio_seconds,
            "wall_seconds": self.wall_seconds,
            "rtf": self.rtf, "threads": self.threads, "repeats": self.repeats,
            "per_stage": {k: self.per_stage[k] for k in sorted(self.per_stage)},
        }
        return json.dumps(record)


def _pin_threads(threads: int):
    """Limit BLAS pools for the duration of the benchmark."""
    import threadpoolctl

    return threadpoolctl.threadpool_limits(limits=threads)


def rtf_benchmark(model: CascadeModel, src_rate: int, tgt_rate: int,
                  corpus: list[Waveform], repeats: int = 5, threads: int = 1,
                  warmup: int = 1) -> RtfReport:
    """Time the full extension path over a corpus.

    Each repeat runs every clip through end to end; the reported wall
    time is the median repeat.  ``warmup`` untimed passes come first so
    caches and allocator state settle.
    """
    if not corpus:
        raise InvalidArgumentError("benchmark corpus is empty")
    if repeats < 1:
        raise InvalidArgumentError("repeats must be >= 1")
    config = model.config
    i = config.stage_index(src_rate)
    j = config.stage_index(tgt_rate)
    if i >= j:
        raise InvalidArgumentError(
            f"source rate {src_rate} must be below target rate {tgt_rate}")
    for clip in corpus:
        if clip.rate != src_rate:
            raise InvalidArgumentError(
                f"corpus clip at {clip.rate} Hz, benchmark input is {src_rate} Hz")

    audio_seconds = sum(len(c) for c in corpus) / src_rate
    walls = []
    per_stage: dict[str, float] = {}
    with _pin_threads(threads):
        for _ in range(warmup):
            for clip in corpus:
                extend_waveform(model, clip, src_rate, tgt_rate)
        for _ in range(repeats):
            t0 = time.perf_counter()
            for clip in corpus:
                extend_waveform(model, clip, src_rate, tgt_rate, timings=per_stage)
            walls.append(time.perf_counter() - t0)

    walls.sort()
    mid = len(walls) // 2
    median = walls[mid] if len(walls) % 2 else 0.5 * (walls[mid - 1] + walls[mid])
    # breakdown averaged over the timed repeats
    per_stage = {k: v / repeats for k, v in per_stage.items()}
    return RtfReport(src_rate=src_rate, tgt_rate=tgt_rate, stage_lo=i,
                     stage_hi=j, audio_seconds=audio_seconds,
                     wall_seconds=median, threads=threads, repeats=repeats,
                     per_stage=per_stage)
