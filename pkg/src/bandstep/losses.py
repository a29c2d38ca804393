"""Training losses: hinge adversarial terms plus spectral reconstruction
terms (log-amplitude MSE, anti-wrapping phase losses, complex MSE).

All functions build autodiff graphs; pass detached tensors where a term
must not train a submodel (e.g. fake scores for the discriminator step
use generator outputs detached upstream).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .nn import Tensor
from .nn import functional as F


@dataclass(frozen=True)
class LossWeights:
    """Weights for the generator objective; adversarial weight also scales
    nothing on the discriminator side (its loss is unweighted)."""

    w_amp: float = 45.0
    w_phase: float = 100.0
    w_complex: float = 22.5
    w_adv: float = 1.0

    def __post_init__(self):
        vals = (self.w_amp, self.w_phase, self.w_complex, self.w_adv)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise InvalidArgumentError(f"loss weights must be finite and >= 0: {vals}")


# ---------------------------------------------------------------------------
# adversarial losses
# ---------------------------------------------------------------------------

def hinge_d_loss(scores_real: Tensor, scores_fake: Tensor) -> Tensor:
    """mean(relu(1 - real)) + mean(relu(1 + fake))."""
    return F.add(F.relu(F.sub(1.0, scores_real)).mean(),
                 F.relu(F.add(scores_fake, 1.0)).mean())


def hinge_g_loss(scores_fake: Tensor) -> Tensor:
    """-mean(fake): push generated scores up."""
    return F.neg(scores_fake.mean())


# ---------------------------------------------------------------------------
# spectral losses
# ---------------------------------------------------------------------------

def amp_loss(log_amp_est: Tensor, log_amp_ref: Tensor) -> Tensor:
    """Mean squared log-amplitude error."""
    if log_amp_est.shape != log_amp_ref.shape:
        raise InvalidArgumentError(
            f"shape mismatch {log_amp_est.shape} vs {log_amp_ref.shape}")
    d = F.sub(log_amp_est, log_amp_ref)
    return (d * d).mean()


def _anti_wrap_mean(delta: Tensor) -> Tensor:
    return F.absolute(F.wrap_principal(delta)).mean()


def _axis_diff(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    return F.sub(F.narrow(x, axis, 1, n - 1), F.narrow(x, axis, 0, n - 1))


def phase_losses(phase_est: Tensor, phase_ref: Tensor,
                 freq_axis: int = 1, time_axis: int = 2) -> tuple[Tensor, Tensor, Tensor]:
    """Anti-wrapping phase losses: instantaneous, group delay, frequency change.

    Each term is the mean anti-wrapped absolute error, taken on raw
    values, frequency-axis first differences, and time-axis first
    differences respectively.  A degenerate axis (length 1) contributes 0.
    """
    if phase_est.shape != phase_ref.shape:
        raise InvalidArgumentError(
            f"shape mismatch {phase_est.shape} vs {phase_ref.shape}")
    ip = _anti_wrap_mean(F.sub(phase_est, phase_ref))
    zero = Tensor(np.zeros((), dtype=phase_est.data.dtype))
    gd = zero
    if phase_est.shape[freq_axis] > 1:
        gd = _anti_wrap_mean(F.sub(_axis_diff(phase_est, freq_axis),
                                   _axis_diff(phase_ref, freq_axis)))
    iaf = zero
    if phase_est.shape[time_axis] > 1:
        iaf = _anti_wrap_mean(F.sub(_axis_diff(phase_est, time_axis),
                                    _axis_diff(phase_ref, time_axis)))
    return ip, gd, iaf


def complex_stft_loss(est: tuple[Tensor, Tensor], ref: tuple[Tensor, Tensor]) -> Tensor:
    """MSE between complex spectra rebuilt from (log_amp, phase) pairs.

    Per bin the contribution is |z_est - z_ref|^2 (real and imaginary
    parts jointly); the result is the mean over all bins and frames.
    """
    la_e, ph_e = est
    la_r, ph_r = ref
    if la_e.shape != la_r.shape or ph_e.shape != ph_r.shape:
        raise InvalidArgumentError("est/ref spectral shapes differ")
    amp_e, amp_r = F.exp(la_e), F.exp(la_r)
    d_re = F.sub(amp_e * F.cos(ph_e), amp_r * F.cos(ph_r))
    d_im = F.sub(amp_e * F.sin(ph_e), amp_r * F.sin(ph_r))
    return F.add((d_re * d_re).mean(), (d_im * d_im).mean())


# ---------------------------------------------------------------------------
# generator objective
# ---------------------------------------------------------------------------

@dataclass
class StageOutput:
    """One stage's generated pair, its reference pair, and the fake scores
    every critic of that stage assigned to the generated output."""

    log_amp_est: Tensor
    phase_est: Tensor
    log_amp_ref: Tensor
    phase_ref: Tensor
    fake_scores: list[Tensor]


def generator_total_loss(stages: list[StageOutput],
                         weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum over stages of spectral and adversarial terms.

    Returns the scalar loss tensor plus a per-term float breakdown
    (pre-weight values, for logging).
    """
    if not stages:
        raise InvalidArgumentError("need at least one stage output")
    total = Tensor(np.zeros((), dtype=np.float32))
    parts = {"amp": 0.0, "ip": 0.0, "gd": 0.0, "iaf": 0.0, "complex": 0.0, "adv": 0.0}
    for stage in stages:
        a = amp_loss(stage.log_amp_est, stage.log_amp_ref)
        ip, gd, iaf = phase_losses(stage.phase_est, stage.phase_ref)
        cx = complex_stft_loss((stage.log_amp_est, stage.phase_est),
                               (stage.log_amp_ref, stage.phase_ref))
        stage_loss = F.add(F.add(a * weights.w_amp,
                                 F.add(F.add(ip, gd), iaf) * weights.w_phase),
                           cx * weights.w_complex)
        adv = 0.0
        for scores in stage.fake_scores:
            g = hinge_g_loss(scores)
            stage_loss = F.add(stage_loss, g * weights.w_adv)
            adv += g.item()
        total = F.add(total, stage_loss)
        parts["amp"] += a.item()
        parts["ip"] += ip.item()
        parts["gd"] += gd.item()
        parts["iaf"] += iaf.item()
        parts["complex"] += cx.item()
        parts["adv"] += adv
    return total, parts
