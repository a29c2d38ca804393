"""Multi-stage bandwidth-extension generator.

A cascade of per-stage blocks lifts a spectrum whose content stops at one
rung of a sampling-rate ladder up to the next rung.  Each block runs two
parallel streams over (batch, bins, frames) features: the amplitude
stream predicts a residual added to the input log-amplitude, and the
phase stream emits pseudo-real/pseudo-imaginary parts combined through
atan2 so the output phase is always principal.

All spectra live at the ladder's top rate (the container rate); a rung
only marks where band content stops.  Inference over parameters is
read-only and safe to run concurrently; training requires exclusive
access.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dsp import (
    SpectrumPair,
    StftConfig,
    Waveform,
    from_log_amp_phase,
    istft,
    sinc_resample,
    stft,
    to_log_amp_phase,
)
from .errors import InvalidArgumentError
from .nn import GRN, Conv1d, LayerNorm, Module, Tensor, no_grad
from .nn import functional as F

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockConfig:
    """Width and kernel choices shared by every stage block."""

    freq_bins: int
    hidden: int = 512
    n_convnext: int = 2
    expansion: int = 3
    dw_kernel: int = 7
    io_kernel: int = 3

    def __post_init__(self):
        if self.freq_bins < 1 or self.hidden < 1 or self.n_convnext < 1:
            raise InvalidArgumentError("freq_bins, hidden, n_convnext must be >= 1")
        if self.expansion < 1:
            raise InvalidArgumentError("expansion must be >= 1")
        if self.dw_kernel % 2 == 0 or self.io_kernel % 2 == 0:
            raise InvalidArgumentError("conv kernels must be odd for same-length output")


@dataclass(frozen=True)
class CascadeConfig:
    """The rate ladder plus analysis and block settings.

    ``rates`` is strictly ascending; stage k (1-based) extends content
    from rates[k-1] to rates[k], so there are ``len(rates) - 1`` blocks.
    """

    rates: tuple[int, ...]
    stft: StftConfig = field(default_factory=StftConfig)
    block: BlockConfig | None = None

    def __post_init__(self):
        rates = tuple(int(r) for r in self.rates)
        object.__setattr__(self, "rates", rates)
        if len(rates) < 2:
            raise InvalidArgumentError("need at least two rates (one stage)")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise InvalidArgumentError(f"rates must be strictly ascending, got {rates}")
        if rates[0] <= 0:
            raise InvalidArgumentError("rates must be positive")
        if self.block is None:
            object.__setattr__(self, "block", BlockConfig(freq_bins=self.stft.n_bins))
        if self.block.freq_bins != self.stft.n_bins:
            raise InvalidArgumentError(
                f"block expects {self.block.freq_bins} bins but the transform "
                f"produces {self.stft.n_bins}")

    @property
    def n_stages(self) -> int:
        return len(self.rates) - 1

    @property
    def container_rate(self) -> int:
        return self.rates[-1]

    def stage_index(self, rate: int) -> int:
        if rate not in self.rates:
            raise InvalidArgumentError(f"rate {rate} is not on the ladder {self.rates}")
        return self.rates.index(rate)


def full_scale_config() -> CascadeConfig:
    """Published operating point: 8/12/16/24/48 kHz ladder, 512-wide streams."""
    stft_cfg = StftConfig(n_fft=1024, win_len=320, hop=80)
    return CascadeConfig(
        rates=(8000, 12000, 16000, 24000, 48000),
        stft=stft_cfg,
        block=BlockConfig(freq_bins=stft_cfg.n_bins, hidden=512),
    )


def desk_scale_config(rates: tuple[int, ...] = (8000, 16000, 48000),
                      hidden: int = 64) -> CascadeConfig:
    """Narrow profile for CPU-budget training runs; same shape, fewer channels."""
    stft_cfg = StftConfig(n_fft=1024, win_len=320, hop=80)
    return CascadeConfig(
        rates=rates,
        stft=stft_cfg,
        block=BlockConfig(freq_bins=stft_cfg.n_bins, hidden=hidden),
    )


def config_to_dict(config: CascadeConfig) -> dict:
    return {
        "rates": list(config.rates),
        "stft": {
            "n_fft": config.stft.n_fft,
            "win_len": config.stft.win_len,
            "hop": config.stft.hop,
        },
        "block": {
            "freq_bins": config.block.freq_bins,
            "hidden": config.block.hidden,
            "n_convnext": config.block.n_convnext,
            "expansion": config.block.expansion,
            "dw_kernel": config.block.dw_kernel,
            "io_kernel": config.block.io_kernel,
        },
    }


def config_from_dict(d: dict) -> CascadeConfig:
    try:
        return CascadeConfig(
            rates=tuple(d["rates"]),
            stft=StftConfig(**d["stft"]),
            block=BlockConfig(**d["block"]),
        )
    except (KeyError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed cascade config: {exc}") from exc


# ---------------------------------------------------------------------------
# network modules
# ---------------------------------------------------------------------------


class ConvNeXtV2Block(Module):
    """Residual unit: depthwise conv, norm, expand, GELU, GRN, restore."""

    def __init__(self, hidden: int, expansion: int, dw_kernel: int, *,
                 rng: np.random.Generator, dtype=np.float32):
        wide = hidden * expansion
        self.dw = Conv1d(hidden, hidden, dw_kernel, padding=dw_kernel // 2,
                         groups=hidden, rng=rng, dtype=dtype)
        self.norm = LayerNorm(hidden, axis=1, dtype=dtype)
        self.expand = Conv1d(hidden, wide, 1, rng=rng, dtype=dtype)
        self.grn = GRN(wide, channel_axis=1, dtype=dtype)
        self.restore = Conv1d(wide, hidden, 1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.dw(x)
        h = self.norm(h)
        h = self.expand(h)
        h = F.gelu(h)
        h = self.grn(h)
        h = self.restore(h)
        return F.add(x, h)


class SpectrumStream(Module):
    """Input projection, ConvNeXt stack, and one output conv per head.

    Convolutional layers with layer normalization sit on both sides of
    the ConvNeXt stack; heads share the trunk but not each other's
    weights.
    """

    def __init__(self, cfg: BlockConfig, n_heads: int, *,
                 rng: np.random.Generator, dtype=np.float32):
        pad = cfg.io_kernel // 2
        self.proj = Conv1d(2 * cfg.freq_bins, cfg.hidden, cfg.io_kernel,
                           padding=pad, rng=rng, dtype=dtype)
        self.norm_in = LayerNorm(cfg.hidden, axis=1, dtype=dtype)
        self.stack = [
            ConvNeXtV2Block(cfg.hidden, cfg.expansion, cfg.dw_kernel,
                            rng=rng, dtype=dtype)
            for _ in range(cfg.n_convnext)
        ]
        self.norm_out = LayerNorm(cfg.hidden, axis=1, dtype=dtype)
        self.heads = [
            Conv1d(cfg.hidden, cfg.freq_bins, cfg.io_kernel, padding=pad,
                   rng=rng, dtype=dtype)
            for _ in range(n_heads)
        ]

    def __call__(self, x: Tensor) -> list[Tensor]:
        h = self.norm_in(self.proj(x))
        for block in self.stack:
            h = block(h)
        h = self.norm_out(h)
        return [head(h) for head in self.heads]


class BweBlock(Module):
    """One stage: residual log-amplitude head plus wrapped-phase head.

    Both streams see the full spectral context (log-amplitude and phase
    concatenated to 2F channels); the streams share no parameters.
    """

    def __init__(self, cfg: BlockConfig, *, rng: np.random.Generator,
                 dtype=np.float32):
        self.amp = SpectrumStream(cfg, n_heads=1, rng=rng, dtype=dtype)
        self.phase = SpectrumStream(cfg, n_heads=2, rng=rng, dtype=dtype)
        self._freq_bins = cfg.freq_bins

    def __call__(self, log_amp: Tensor, phase: Tensor) -> tuple[Tensor, Tensor]:
        if (log_amp.shape != phase.shape or len(log_amp.shape) != 3
                or log_amp.shape[1] != self._freq_bins):
            raise InvalidArgumentError(
                f"expected matching (B, {self._freq_bins}, T) inputs, got "
                f"{log_amp.shape} and {phase.shape}")
        x = F.concat([log_amp, phase], axis=1)
        residual = self.amp(x)[0]
        pseudo_real, pseudo_imag = self.phase(x)
        return F.add(log_amp, residual), F.atan2(pseudo_imag, pseudo_real)


class CascadeModel(Module):
    """All stage blocks of the ladder plus an execution counter.

    ``block_calls`` counts block forward passes since construction (or
    the last manual reset); it exists so tests can assert exactly which
    stages ran.
    """

    def __init__(self, config: CascadeConfig, *, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.config = config
        self.blocks = [
            BweBlock(config.block, rng=rng, dtype=dtype)
            for _ in range(config.n_stages)
        ]
        self.block_calls = 0

    def stage_forward(self, index: int, log_amp: Tensor,
                      phase: Tensor) -> tuple[Tensor, Tensor]:
        """Run block ``index`` (0-based; block k lifts rung k to rung k+1)."""
        if not 0 <= index < len(self.blocks):
            raise InvalidArgumentError(
                f"stage index {index} out of range [0, {len(self.blocks)})")
        self.block_calls += 1
        return self.blocks[index](log_amp, phase)


# ---------------------------------------------------------------------------
# inference over spectra and waveforms
# ---------------------------------------------------------------------------


def _pair_to_tensors(pair: SpectrumPair) -> tuple[Tensor, Tensor]:
    la = np.ascontiguousarray(pair.log_amp.T[None], dtype=np.float32)
    ph = np.ascontiguousarray(pair.phase.T[None], dtype=np.float32)
    return Tensor(la), Tensor(ph)


def cascade_extend(model: CascadeModel, pair: SpectrumPair, i: int, j: int,
                   timings: dict[str, float] | None = None) -> SpectrumPair:
    """Lift ``pair`` from rung i to rung j by running blocks i+1 .. j.

    The input must sit at the container rate with content up to rates[i];
    the result is the same container-rate spectrum marked rates[j].
    With ``timings`` given, per-stage wall time accumulates into it under
    ``stage.<k>`` keys.
    """
    config = model.config
    n = config.n_stages
    if not (0 <= i < j <= n):
        raise InvalidArgumentError(f"need 0 <= i < j <= {n}, got i={i}, j={j}")
    if pair.effective_rate != config.rates[i]:
        raise InvalidArgumentError(
            f"input band ends at {pair.effective_rate} Hz but rung {i} is "
            f"{config.rates[i]} Hz")
    if pair.rate != config.container_rate:
        raise InvalidArgumentError(
            f"spectra must live at the container rate {config.container_rate}, "
            f"got {pair.rate}")

    la, ph = _pair_to_tensors(pair)
    with no_grad():
        for k in range(i, j):
            t0 = time.perf_counter()
            la, ph = model.stage_forward(k, la, ph)
            if timings is not None:
                key = f"stage.{k}"
                timings[key] = timings.get(key, 0.0) + time.perf_counter() - t0
    return SpectrumPair(
        log_amp=la.data[0].T,
        phase=ph.data[0].T,
        rate=pair.rate,
        effective_rate=config.rates[j],
        cfg=pair.cfg,
        n_samples=pair.n_samples,
    )


def extend_waveform(model: CascadeModel, wav: Waveform, src_rate: int,
                    tgt_rate: int,
                    timings: dict[str, float] | None = None) -> Waveform:
    """Raise ``wav`` from src_rate to tgt_rate through the trained cascade.

    The signal is lifted to the container rate, extended stage by stage
    in the spectral domain, synthesized, and (when tgt_rate is below the
    container) brought down to the requested rate.  With ``timings``
    given, wall time accumulates into it per phase (``resample_in``,
    ``analysis``, ``stage.<k>``, ``synthesis``, ``resample_out``).
    """
    config = model.config
    i = config.stage_index(src_rate)
    j = config.stage_index(tgt_rate)
    if i >= j:
        raise InvalidArgumentError(
            f"source rate {src_rate} must be below target rate {tgt_rate}")
    if wav.rate != src_rate:
        raise InvalidArgumentError(
            f"waveform is at {wav.rate} Hz but src_rate says {src_rate}")

    def clock(key: str, start: float) -> float:
        now = time.perf_counter()
        if timings is not None:
            timings[key] = timings.get(key, 0.0) + now - start
        return now

    t = time.perf_counter()
    lifted = sinc_resample(wav, config.container_rate)
    t = clock("resample_in", t)
    pair = to_log_amp_phase(stft(lifted, config.stft), effective_rate=src_rate)
    t = clock("analysis", t)
    extended = cascade_extend(model, pair, i, j, timings=timings)
    t = time.perf_counter()
    out = istft(from_log_amp_phase(extended))
    t = clock("synthesis", t)
    if tgt_rate < config.container_rate:
        out = sinc_resample(out, tgt_rate)
        clock("resample_out", t)
    return out
