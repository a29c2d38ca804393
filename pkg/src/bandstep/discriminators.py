"""Per-stage discriminators: one on the waveform, one on log-amplitude
spectra, one on phase spectra.

Channel counts are configurable so CPU-budget training can run a narrow
profile; layer shapes (kernels, strides, groups) stay fixed.
"""

from __future__ import annotations

from math import gcd

import numpy as np

from .errors import InvalidArgumentError
from .nn import Conv1d, Conv2d, Module, Tensor
from .nn import functional as F

LEAKY_SLOPE = 0.1


class WaveformDisc(Module):
    """Strided 1-D conv stack over (batch, 1, samples).

    Seven layers: a wide input conv, four stride-4 grouped convs (channel
    ramp 16 up to ``cap``), a narrowing conv, and a 1-channel score conv.
    The stride product is 256, and inputs shorter than that are rejected:
    the deepest layer would see less than one receptive field.
    """

    MIN_INPUT = 256

    def __init__(self, cap: int = 1024, *, rng: np.random.Generator,
                 dtype=np.float32):
        ramp = [min(cap, c) for c in (16, 64, 256, 1024, 1024)]

        def grouped(c_in, c_out, nominal):
            return min(nominal, gcd(c_in, c_out))

        self.convs = [
            Conv1d(1, ramp[0], 15, stride=1, padding=7, rng=rng, dtype=dtype),
            Conv1d(ramp[0], ramp[1], 41, stride=4, padding=20,
                   groups=grouped(ramp[0], ramp[1], 4), rng=rng, dtype=dtype),
            Conv1d(ramp[1], ramp[2], 41, stride=4, padding=20,
                   groups=grouped(ramp[1], ramp[2], 16), rng=rng, dtype=dtype),
            Conv1d(ramp[2], ramp[3], 41, stride=4, padding=20,
                   groups=grouped(ramp[2], ramp[3], 16), rng=rng, dtype=dtype),
            Conv1d(ramp[3], ramp[4], 41, stride=4, padding=20,
                   groups=grouped(ramp[3], ramp[4], 16), rng=rng, dtype=dtype),
            Conv1d(ramp[4], ramp[4], 5, stride=1, padding=2, rng=rng, dtype=dtype),
        ]
        self.score = Conv1d(ramp[4], 1, 3, stride=1, padding=1, rng=rng, dtype=dtype)

    def score_length(self, n_samples: int) -> int:
        length = n_samples
        for conv in self.convs:
            k = conv.weight.shape[-1]
            length = (length + 2 * conv.padding - (k - 1) - 1) // conv.stride + 1
        return length

    def __call__(self, x: Tensor) -> Tensor:
        if len(x.shape) != 3 or x.shape[1] != 1:
            raise InvalidArgumentError(f"expected (B, 1, samples), got {x.shape}")
        if x.shape[2] < self.MIN_INPUT:
            raise InvalidArgumentError(
                f"waveform of {x.shape[2]} samples is below the {self.MIN_INPUT}"
                "-sample receptive floor")
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        return self.score(h)


class SpectralDisc(Module):
    """2-D conv stack over (batch, 1, bins, frames).

    Six layers with 3x9 kernels striding (1, 2) over time in the middle,
    two 3x3 layers at the end, 1-channel score map out.  Used unchanged
    for both log-amplitude and phase inputs.
    """

    def __init__(self, channels: tuple[int, ...] = (32, 32, 32, 32), *,
                 rng: np.random.Generator, dtype=np.float32):
        if len(channels) != 4:
            raise InvalidArgumentError("spectral disc takes 4 trunk channel counts")
        c0, c1, c2, c3 = channels
        self.convs = [
            Conv2d(1, c0, (3, 9), stride=(1, 1), padding=(1, 4), rng=rng, dtype=dtype),
            Conv2d(c0, c1, (3, 9), stride=(1, 2), padding=(1, 4), rng=rng, dtype=dtype),
            Conv2d(c1, c2, (3, 9), stride=(1, 2), padding=(1, 4), rng=rng, dtype=dtype),
            Conv2d(c2, c3, (3, 9), stride=(1, 2), padding=(1, 4), rng=rng, dtype=dtype),
            Conv2d(c3, c3, (3, 3), stride=(1, 1), padding=(1, 1), rng=rng, dtype=dtype),
        ]
        self.score = Conv2d(c3, 1, (3, 3), stride=(1, 1), padding=(1, 1),
                            rng=rng, dtype=dtype)

    def __call__(self, s: Tensor) -> Tensor:
        if len(s.shape) != 4 or s.shape[1] != 1:
            raise InvalidArgumentError(f"expected (B, 1, bins, frames), got {s.shape}")
        if s.shape[3] < 8:
            raise InvalidArgumentError(
                f"{s.shape[3]} frames is below the 8-frame receptive floor")
        h = s
        for conv in self.convs:
            h = F.leaky_relu(conv(h), LEAKY_SLOPE)
        return self.score(h)


class StageDiscriminators(Module):
    """The three critics judging one stage's output."""

    def __init__(self, wave_cap: int = 1024,
                 spec_channels: tuple[int, ...] = (32, 32, 32, 32), *,
                 rng: np.random.Generator, dtype=np.float32):
        self.wave = WaveformDisc(wave_cap, rng=rng, dtype=dtype)
        self.amp = SpectralDisc(spec_channels, rng=rng, dtype=dtype)
        self.phase = SpectralDisc(spec_channels, rng=rng, dtype=dtype)


class DiscriminatorBank(Module):
    """One StageDiscriminators per cascade stage."""

    def __init__(self, n_stages: int, wave_cap: int = 1024,
                 spec_channels: tuple[int, ...] = (32, 32, 32, 32), *,
                 seed: int = 0, dtype=np.float32):
        if n_stages < 1:
            raise InvalidArgumentError("need at least one stage")
        rng = np.random.default_rng(seed)
        self.stages = [
            StageDiscriminators(wave_cap, spec_channels, rng=rng, dtype=dtype)
            for _ in range(n_stages)
        ]
