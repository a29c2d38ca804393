"""Training data: synthetic corpus generation, WAV directory ingestion,
and per-stage feature extraction.

The synthetic corpus is a stand-in for a speech corpus: harmonic stacks
with random fundamentals, a chirp, and high-band shaped noise, so every
clip carries energy up to the container Nyquist (there is always
something to extend).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dsp import Waveform, band_limit, stft, to_log_amp_phase
from .errors import DataError, InvalidArgumentError
from .model import CascadeConfig
from .wavio import read_wav

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthCorpusSpec:
    """Recipe knobs for the generated corpus; component internals (f0 range
    80-400 Hz, harmonic rolloff, chirp, high-band noise) are fixed."""

    n_clips: int = 64
    duration: float = 0.5
    rate: int = 48000
    seed: int = 0

    def __post_init__(self):
        if self.n_clips < 1:
            raise InvalidArgumentError("n_clips must be >= 1")
        if self.duration <= 0 or self.rate <= 0:
            raise InvalidArgumentError("duration and rate must be positive")


def _synth_clip(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    t = np.arange(n) / rate
    nyq = rate / 2.0

    f0 = rng.uniform(80.0, 400.0)
    n_harm = max(1, int(0.98 * nyq / f0))
    k = np.arange(1, n_harm + 1)
    rolloff = rng.uniform(0.5, 1.2)
    amps = k.astype(np.float64) ** -rolloff
    phases = rng.uniform(0.0, 2.0 * np.pi, n_harm)
    harm = (amps[:, None] * np.sin(
        2.0 * np.pi * f0 * k[:, None] * t[None, :] + phases[:, None])).sum(axis=0)
    harm /= np.max(np.abs(harm))

    f_lo = rng.uniform(100.0, 0.2 * nyq)
    f_hi = rng.uniform(0.5 * nyq, 0.98 * nyq)
    sweep = f_lo * t + 0.5 * (f_hi - f_lo) / t[-1] * t * t
    chirp = np.cos(2.0 * np.pi * sweep + rng.uniform(0.0, 2.0 * np.pi))

    # noise shaped to the top band guarantees out-of-band content to learn
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spectrum[freqs < 0.4 * nyq] = 0.0
    hf = np.fft.irfft(spectrum, n)
    hf /= max(np.max(np.abs(hf)), 1e-12)

    x = harm + 0.3 * chirp + 0.1 * hf
    x *= 0.95 * rng.uniform(0.6, 1.0) / np.max(np.abs(x))
    return x


def synth_corpus(spec: SynthCorpusSpec) -> list[Waveform]:
    """Deterministic under the seed: clip i is a pure function of (seed, i)."""
    n = int(round(spec.duration * spec.rate))
    clips = []
    for i in range(spec.n_clips):
        rng = np.random.default_rng((spec.seed, i))
        clips.append(Waveform(_synth_clip(rng, n, spec.rate), spec.rate))
    return clips


# ---------------------------------------------------------------------------
# WAV directory ingestion
# ---------------------------------------------------------------------------

def load_wav_corpus(directory, split_ratio: float = 0.9, seed: int = 0,
                    expected_rate: int = 48000) -> tuple[list[Waveform], list[Waveform]]:
    """Read all WAVs in a directory and split train/test deterministically.

    Unreadable files and files at the wrong rate are skipped, each with
    a logged warning naming the file.
    """
    import os

    if not 0.0 < split_ratio <= 1.0:
        raise InvalidArgumentError("split_ratio must be in (0, 1]")
    try:
        names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".wav"))
    except OSError as exc:
        raise DataError(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise DataError(f"no WAV files in {directory}")

    clips = []
    for name in names:
        path = os.path.join(directory, name)
        try:
            wav = read_wav(path)
        except DataError as exc:
            log.warning("skipping %s: %s", name, exc)
            continue
        if wav.rate != expected_rate:
            log.warning("skipping %s: rate %d != expected %d", name, wav.rate,
                        expected_rate)
            continue
        clips.append(wav)
    if not clips:
        raise DataError(f"no usable WAV files in {directory} at {expected_rate} Hz")

    perm = np.random.default_rng(seed).permutation(len(clips))
    n_train = int(round(split_ratio * len(clips)))
    train = [clips[i] for i in perm[:n_train]]
    test = [clips[i] for i in perm[n_train:]]
    return train, test


def slice_into_clips(wavs: list[Waveform], clip_len: int) -> list[Waveform]:
    """Cut each waveform into non-overlapping clip_len pieces (tail dropped)."""
    if clip_len < 1:
        raise InvalidArgumentError("clip_len must be >= 1")
    out = []
    for wav in wavs:
        for start in range(0, wav.samples.size - clip_len + 1, clip_len):
            out.append(Waveform(wav.samples[start:start + clip_len].copy(), wav.rate))
    if not out:
        raise DataError(
            f"no clips of {clip_len} samples could be cut (longest input "
            f"{max((w.samples.size for w in wavs), default=0)})")
    return out


# ---------------------------------------------------------------------------
# per-stage features
# ---------------------------------------------------------------------------

@dataclass
class StageFeatures:
    """Real features for one rung, all at the container rate."""

    log_amp: np.ndarray  # (n_clips, F, T) float32
    phase: np.ndarray    # (n_clips, F, T) float32
    wave: np.ndarray     # (n_clips, clip_len) float32 band-limited waveform


@dataclass
class TrainingBatch:
    """Per-rung real features for a set of equal-length clips.

    ``rungs[k]`` holds the band-limited-to-rates[k] version of every
    clip; rungs[-1] is the unfiltered reference.
    """

    rungs: list[StageFeatures]
    clip_len: int

    @property
    def n_clips(self) -> int:
        return self.rungs[0].log_amp.shape[0]

    def select(self, indices: np.ndarray) -> "TrainingBatch":
        return TrainingBatch(
            rungs=[StageFeatures(r.log_amp[indices], r.phase[indices],
                                 r.wave[indices]) for r in self.rungs],
            clip_len=self.clip_len,
        )


def make_training_batch(clips: list[Waveform], config: CascadeConfig) -> TrainingBatch:
    """Extract frame-aligned (log_amp, phase, waveform) features per rung.

    Every clip must be at the container rate and share one length; each
    rung's features come from the clip band-limited to that rung's rate
    (the top rung is the clip unchanged).
    """
    if not clips:
        raise InvalidArgumentError("need at least one clip")
    clip_len = clips[0].samples.size
    for c in clips:
        if c.rate != config.container_rate:
            raise InvalidArgumentError(
                f"clips must be at {config.container_rate} Hz, got {c.rate}")
        if c.samples.size != clip_len:
            raise InvalidArgumentError(
                f"clips must share one length; saw {clip_len} and {c.samples.size}")

    rungs = []
    for rate in config.rates:
        las, phs, wavs = [], [], []
        for clip in clips:
            banded = clip if rate == config.container_rate else band_limit(clip, rate)
            pair = to_log_amp_phase(stft(banded, config.stft), effective_rate=rate)
            las.append(pair.log_amp.T.astype(np.float32))
            phs.append(pair.phase.T.astype(np.float32))
            wavs.append(banded.samples.astype(np.float32))
        rungs.append(StageFeatures(
            log_amp=np.stack(las), phase=np.stack(phs), wave=np.stack(wavs)))
    return TrainingBatch(rungs=rungs, clip_len=clip_len)
