"""Deterministic signal-processing front end.

Band-limited sample-rate conversion (windowed-sinc polyphase), STFT/iSTFT
with least-squares overlap-add inversion, and conversion between complex
spectrograms and log-amplitude / wrapped-phase pairs.

All functions here are pure and safe to call concurrently on disjoint
inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import upfirdn

from .errors import InvalidArgumentError

# Amplitude floor applied before the log; bounds log_amp at ln(1e-5) ~ -11.5
# so losses stay finite on silent bins.
AMP_FLOOR = 1e-5

# Stopband attenuation target (dB) and transition width (fraction of the
# narrower Nyquist) for the resampling filter.
RESAMPLE_STOPBAND_DB = 60.0
RESAMPLE_TRANSITION = 0.05


@dataclass
class Waveform:
    """Mono audio samples tagged with their sampling rate in Hz."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidArgumentError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if self.rate <= 0:
            raise InvalidArgumentError(f"sampling rate must be positive, got {self.rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise InvalidArgumentError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


def hann_periodic(length: int) -> np.ndarray:
    """Periodic Hann taper (DFT-even), as used for STFT analysis."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters: FFT length, window length, hop, Hann window."""

    n_fft: int = 1024
    win_len: int = 320
    hop: int = 80

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.n_fft):
            raise InvalidArgumentError(
                f"need 0 < hop <= win_len <= n_fft, got {self.hop}/{self.win_len}/{self.n_fft}"
            )

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return _cached_window(self.win_len)

    @property
    def pad(self) -> int:
        # Reflect padding on each side; centers the first frame on sample 0.
        return self.win_len // 2


@lru_cache(maxsize=8)
def _cached_window(win_len: int) -> np.ndarray:
    w = hann_periodic(win_len)
    w.flags.writeable = False
    return w


@dataclass
class ComplexSpectrogram:
    """T x F grid of complex STFT values plus its container rate and config.

    ``n_samples`` records the pre-padding signal length when the grid came
    from :func:`stft`; it lets :func:`istft` return exactly the original
    length.  Hand-built grids may leave it ``None``.
    """

    frames: np.ndarray  # (T, F) complex
    rate: int
    cfg: StftConfig
    n_samples: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 2:
            raise InvalidArgumentError(f"spectrogram must be 2-D, got {self.frames.shape}")
        if self.frames.shape[1] != self.cfg.n_bins:
            raise InvalidArgumentError(
                f"bin count {self.frames.shape[1]} != n_fft/2+1 = {self.cfg.n_bins}"
            )


@dataclass
class SpectrumPair:
    """Aligned log-amplitude and wrapped-phase grids (T x F).

    ``effective_rate`` marks the source bandwidth: content is meaningful in
    bins up to ``band_cutoff_bin(effective_rate, rate, n_fft)``.
    """

    log_amp: np.ndarray  # (T, F) natural-log amplitude
    phase: np.ndarray    # (T, F) radians in (-pi, pi]
    rate: int
    effective_rate: int
    cfg: StftConfig
    n_samples: int | None = None

    def __post_init__(self):
        if self.log_amp.shape != self.phase.shape:
            raise InvalidArgumentError(
                f"log_amp {self.log_amp.shape} and phase {self.phase.shape} differ"
            )
        if self.effective_rate > self.rate:
            raise InvalidArgumentError(
                f"effective_rate {self.effective_rate} exceeds container rate {self.rate}"
            )

    @property
    def n_frames(self) -> int:
        return self.log_amp.shape[0]


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def kaiser_beta(atten_db: float) -> float:
    """Kaiser window shape parameter for a given stopband attenuation."""
    if atten_db > 50.0:
        return 0.1102 * (atten_db - 8.7)
    if atten_db >= 21.0:
        return 0.5842 * (atten_db - 21.0) ** 0.4 + 0.07886 * (atten_db - 21.0)
    return 0.0


@lru_cache(maxsize=64)
def _design_resample_filter(up: int, down: int) -> np.ndarray:
    """Windowed-sinc lowpass for a rational ``up/down`` conversion.

    The filter runs at the upsampled rate; its cutoff sits half a transition
    band below the narrower Nyquist so the stopband starts exactly at the
    band edge.  Gain ``up`` compensates the zero-stuffing loss.
    """
    # Normalized (cycles/sample at the upsampled rate) band edge and width.
    f_edge = min(1.0, up / down) / (2.0 * up)
    width = RESAMPLE_TRANSITION * f_edge
    beta = kaiser_beta(RESAMPLE_STOPBAND_DB)
    n_taps = int(math.ceil((RESAMPLE_STOPBAND_DB - 7.95) / (2.285 * 2.0 * math.pi * width)))
    if n_taps % 2 == 0:
        n_taps += 1  # odd length -> integer group delay
    m = np.arange(n_taps) - (n_taps - 1) / 2.0
    cutoff = f_edge - width / 2.0
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * m) * np.kaiser(n_taps, beta)
    h *= up / np.sum(h)
    h.flags.writeable = False
    return h


def sinc_resample(wav: Waveform, target_rate: int) -> Waveform:
    """Band-limited resampling via a Kaiser-windowed sinc polyphase filter.

    Output length is ``round(len * target_rate / rate)``; content above the
    narrower Nyquist is attenuated by at least 60 dB.
    """
    if target_rate <= 0:
        raise InvalidArgumentError(f"target rate must be positive, got {target_rate}")
    if target_rate == wav.rate:
        return Waveform(wav.samples.copy(), wav.rate)
    n = len(wav)
    out_len = int(round(n * target_rate / wav.rate))
    if n == 0:
        return Waveform(np.zeros(0), target_rate)

    g = math.gcd(int(wav.rate), int(target_rate))
    up, down = target_rate // g, wav.rate // g
    h = _design_resample_filter(up, down)
    delay = (len(h) - 1) // 2

    # Filter at the upsampled rate, then compensate the group delay and
    # stride down.  Tail padding guarantees the slice is fully covered.
    needed = delay + (out_len - 1) * down + 1
    have = (n - 1) * up + len(h)
    pad_in = max(0, -(-(needed - have) // up))
    x = np.concatenate([wav.samples, np.zeros(pad_in)])
    y_full = upfirdn(h, x, up=up, down=1)
    y = y_full[delay:delay + out_len * down:down]
    return Waveform(y[:out_len], target_rate)


def band_limit(wav: Waveform, effective_rate: int) -> Waveform:
    """Remove content above ``effective_rate / 2`` while keeping the rate.

    Decimates to ``effective_rate`` and sinc-interpolates back, then pads or
    trims to the original length (rational rounding can shift it by a couple
    of samples).
    """
    if effective_rate == wav.rate:
        return Waveform(wav.samples.copy(), wav.rate)
    narrow = sinc_resample(wav, effective_rate)
    wide = sinc_resample(narrow, wav.rate)
    n = len(wav)
    out = wide.samples
    if len(out) < n:
        out = np.concatenate([out, np.zeros(n - len(out))])
    return Waveform(out[:n], wav.rate)


# ---------------------------------------------------------------------------
# STFT / iSTFT
# ---------------------------------------------------------------------------

def _frame_count(n_padded: int, cfg: StftConfig) -> int:
    return 1 + (n_padded - cfg.win_len) // cfg.hop


def stft_array(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """STFT of a 1-D signal -> (T, F) complex grid.

    Frames are centered: the signal is reflect-padded by win_len/2 on each
    side, windowed segments are zero-padded to n_fft on the right, and
    ``frames[t]`` is the rfft of segment ``t``.
    """
    if x.size == 0:
        raise InvalidArgumentError("cannot STFT an empty waveform")
    pad = cfg.pad
    if x.size < 2:  # reflect padding needs at least 2 samples
        x = np.concatenate([x, np.zeros(2 - x.size)])
    xp = np.pad(x, pad, mode="reflect")
    t_count = _frame_count(xp.size, cfg)
    if t_count < 1:
        raise InvalidArgumentError(f"signal too short for win_len {cfg.win_len}")
    stride = xp.strides[0]
    segs = np.lib.stride_tricks.as_strided(
        xp, shape=(t_count, cfg.win_len), strides=(stride * cfg.hop, stride)
    )
    return np.fft.rfft(segs * cfg.window, n=cfg.n_fft, axis=1)


def ola_norm(t_count: int, cfg: StftConfig) -> np.ndarray:
    """Squared-window overlap-add normalization for ``t_count`` frames."""
    length = cfg.win_len + (t_count - 1) * cfg.hop
    wsq = cfg.window ** 2
    norm = np.zeros(length)
    for t in range(t_count):
        norm[t * cfg.hop:t * cfg.hop + cfg.win_len] += wsq
    return norm


def istft_array(frames: np.ndarray, cfg: StftConfig, n_samples: int | None) -> np.ndarray:
    """Least-squares overlap-add inverse of :func:`stft_array`.

    With ``n_samples`` given, the center padding is stripped and exactly
    that many samples are returned; otherwise the raw (unpadded) OLA signal
    of length ``win_len + (T-1) * hop`` is returned.
    """
    t_count, n_bins = frames.shape
    if n_bins != cfg.n_bins:
        raise InvalidArgumentError(f"bin count {n_bins} != n_fft/2+1 = {cfg.n_bins}")
    segs = np.fft.irfft(frames, n=cfg.n_fft, axis=1)[:, :cfg.win_len]
    segs = segs * cfg.window
    length = cfg.win_len + (t_count - 1) * cfg.hop
    out = np.zeros(length)
    for t in range(t_count):
        out[t * cfg.hop:t * cfg.hop + cfg.win_len] += segs[t]
    norm = ola_norm(t_count, cfg)
    out /= np.maximum(norm, 1e-12)
    if n_samples is None:
        return out
    pad = cfg.pad
    return out[pad:pad + n_samples]


def stft(wav: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    return ComplexSpectrogram(stft_array(wav.samples, cfg), wav.rate, cfg, n_samples=len(wav))


def istft(spec: ComplexSpectrogram) -> Waveform:
    return Waveform(istft_array(spec.frames, spec.cfg, spec.n_samples), spec.rate)


# ---------------------------------------------------------------------------
# Log-amplitude / phase representation
# ---------------------------------------------------------------------------

def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Map angles into (-pi, pi]; exact -pi folds to +pi."""
    out = np.mod(phase + np.pi, 2.0 * np.pi) - np.pi
    out[out <= -np.pi] = np.pi
    return out


def to_log_amp_phase(spec: ComplexSpectrogram, effective_rate: int | None = None) -> SpectrumPair:
    """Split a complex grid into floored natural-log amplitude and phase.

    Zero-magnitude bins take phase 0 by convention.
    """
    mag = np.abs(spec.frames)
    log_amp = np.log(np.maximum(mag, AMP_FLOOR))
    phase = np.angle(spec.frames)
    phase[mag == 0.0] = 0.0
    phase[phase <= -np.pi] = np.pi  # angle() can emit -pi
    return SpectrumPair(
        log_amp=log_amp,
        phase=phase,
        rate=spec.rate,
        effective_rate=effective_rate if effective_rate is not None else spec.rate,
        cfg=spec.cfg,
        n_samples=spec.n_samples,
    )


def from_log_amp_phase(pair: SpectrumPair) -> ComplexSpectrogram:
    """Recombine a pair into the complex grid exp(log_amp) * e^(i*phase)."""
    if pair.log_amp.shape != pair.phase.shape:
        raise InvalidArgumentError("log_amp / phase shape mismatch")
    z = np.exp(pair.log_amp) * (np.cos(pair.phase) + 1j * np.sin(pair.phase))
    return ComplexSpectrogram(z, pair.rate, pair.cfg, n_samples=pair.n_samples)


def band_cutoff_bin(effective_rate: int, container_rate: int, n_fft: int) -> int:
    """Last FFT bin inside the effective band 0..effective_rate/2 Hz."""
    if effective_rate > container_rate:
        raise InvalidArgumentError(
            f"effective rate {effective_rate} exceeds container rate {container_rate}"
        )
    if effective_rate <= 0 or container_rate <= 0:
        raise InvalidArgumentError("rates must be positive")
    return (n_fft * effective_rate) // (2 * container_rate)
