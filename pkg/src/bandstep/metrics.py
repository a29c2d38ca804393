"""Quality metrics: log-spectral distance (full-band and band-limited)
and spectral SNR.

These use their own evaluation-grade STFT resolution (2048/512 by
default), independent of the model's analysis config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import StftConfig, Waveform, stft_array
from .errors import InvalidArgumentError

POWER_FLOOR = 1e-10
SNR_CAP_DB = 120.0


@dataclass(frozen=True)
class LsdConfig:
    """Analysis resolution for the metrics (full-length Hann window)."""

    n_fft: int = 2048
    hop: int = 512

    def __post_init__(self):
        if self.n_fft < 2 or self.hop < 1:
            raise InvalidArgumentError("n_fft must be >= 2 and hop >= 1")

    @property
    def stft(self) -> StftConfig:
        return StftConfig(n_fft=self.n_fft, win_len=self.n_fft, hop=self.hop)


def _aligned_spectra(ref: Waveform, est: Waveform,
                     cfg: LsdConfig) -> tuple[np.ndarray, np.ndarray]:
    """Common-length complex grids (T, F); trims up to one hop of slack."""
    if ref.rate != est.rate:
        raise InvalidArgumentError(
            f"sample rates differ: ref {ref.rate} Hz vs est {est.rate} Hz")
    n_ref, n_est = ref.samples.size, est.samples.size
    if abs(n_ref - n_est) > cfg.hop:
        raise InvalidArgumentError(
            f"length mismatch {abs(n_ref - n_est)} samples exceeds one hop ({cfg.hop})")
    n = min(n_ref, n_est)
    scfg = cfg.stft
    return (stft_array(ref.samples[:n], scfg), stft_array(est.samples[:n], scfg))


def _log_power(frames: np.ndarray) -> np.ndarray:
    power = frames.real ** 2 + frames.imag ** 2
    return np.log10(np.maximum(power, POWER_FLOOR))


def lsd(ref: Waveform, est: Waveform, cfg: LsdConfig = LsdConfig()) -> float:
    """Log-spectral distance: RMS over bins of the log10 power gap,
    averaged over frames."""
    s_ref, s_est = _aligned_spectra(ref, est, cfg)
    diff = _log_power(s_ref) - _log_power(s_est)
    return float(np.mean(np.sqrt(np.mean(diff * diff, axis=1))))


def lsd_band(ref: Waveform, est: Waveform, cfg: LsdConfig,
             f_lo: float, f_hi: float) -> float:
    """LSD restricted to bins with center frequency in [f_lo, f_hi]."""
    nyquist = ref.rate / 2.0
    if not 0.0 <= f_lo < f_hi:
        raise InvalidArgumentError(f"need 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]")
    if f_lo > nyquist:
        raise InvalidArgumentError(
            f"band start {f_lo} Hz is above the Nyquist frequency {nyquist} Hz")
    s_ref, s_est = _aligned_spectra(ref, est, cfg)
    freqs = np.arange(s_ref.shape[1]) * (ref.rate / cfg.n_fft)
    keep = (freqs >= f_lo) & (freqs <= f_hi)
    if not keep.any():
        raise InvalidArgumentError(f"no analysis bins inside [{f_lo}, {f_hi}] Hz")
    diff = _log_power(s_ref[:, keep]) - _log_power(s_est[:, keep])
    return float(np.mean(np.sqrt(np.mean(diff * diff, axis=1))))


def spectral_snr(ref: Waveform, est: Waveform,
                 cfg: LsdConfig = LsdConfig()) -> float:
    """10 log10 of reference spectral energy over spectral error energy,
    capped at 120 dB."""
    s_ref, s_est = _aligned_spectra(ref, est, cfg)
    num = float(np.sum(np.abs(s_ref) ** 2))
    den = float(np.sum(np.abs(s_ref - s_est) ** 2))
    if num == 0.0:
        raise InvalidArgumentError("reference signal has no spectral energy")
    if den == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(num / den), SNR_CAP_DB)
