"""Training loop: scheduled sampling over the cascade, alternating
discriminator/generator updates, decoupled-weight-decay Adam, and an
append-only JSON-lines metrics log.

Metrics log format: one JSON object per line with keys ``step``, ``lr``,
``tf_ratio``, ``g_loss``, ``d_loss``, the per-term generator components
(``amp``, ``ip``, ``gd``, ``iaf``, ``complex``, ``adv``), and the
scheduled-sampling instrumentation (``gen_inputs``, ``real_fraction``).

Determinism: the batch order for epoch e and the sampling draws for step
s are pure functions of (seed, e) and (seed, s), so a resumed run
replays the exact trajectory of an uninterrupted one.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, model_tensors, save_checkpoint
from .data import TrainingBatch
from .discriminators import DiscriminatorBank
from .errors import CheckpointError, InvalidArgumentError, NumericError
from .losses import LossWeights, StageOutput, generator_total_loss, hinge_d_loss
from .model import CascadeModel
from .nn import Tensor
from .nn import functional as F
from .optim import AdamW
from .schedule import OptimizerConfig, TeacherForcingSchedule, lr_at


# ---------------------------------------------------------------------------
# scheduled sampling
# ---------------------------------------------------------------------------

def sample_block_inputs(real_log_amp: np.ndarray, real_phase: np.ndarray,
                        gen_log_amp: np.ndarray, gen_phase: np.ndarray,
                        ratio: float, rng: np.random.Generator,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mix real and previously-generated pairs for one stage's input.

    Draws independently per clip: with probability ``ratio`` the clip
    keeps its real band-limited pair, otherwise it takes the pair the
    previous block generated.  Returns new arrays plus the boolean
    real-mask, so the consumer sees a fresh leaf (gradients never cross
    the block boundary through a sampled input).
    """
    if real_log_amp.shape != gen_log_amp.shape:
        raise InvalidArgumentError(
            f"real/generated shapes differ: {real_log_amp.shape} vs {gen_log_amp.shape}")
    real_mask = rng.random(real_log_amp.shape[0]) < ratio
    sel = real_mask[:, None, None]
    log_amp = np.where(sel, real_log_amp, gen_log_amp)
    phase = np.where(sel, real_phase, gen_phase)
    return log_amp, phase, real_mask


# ---------------------------------------------------------------------------
# one optimization step
# ---------------------------------------------------------------------------

def _require_finite(name: str, value: float, step: int) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite {name} ({value}) at step {step}")


def train_step(model: CascadeModel, discs: DiscriminatorBank | None,
               batch: TrainingBatch, schedule: TeacherForcingSchedule,
               opt_g: AdamW, opt_d: AdamW | None, weights: LossWeights,
               lr: float, rng: np.random.Generator) -> dict:
    """One alternating update: discriminators first, then the generator.

    With ``weights.w_adv == 0`` (or no discriminators) the adversarial
    machinery is skipped entirely and training is spectral-only.
    Advances the schedule exactly once.  Raises NumericError naming the
    first non-finite loss term.
    """
    n_stages = model.config.n_stages
    if len(batch.rungs) != n_stages + 1:
        raise InvalidArgumentError(
            f"batch has {len(batch.rungs)} rungs, model needs {n_stages + 1}")
    step = schedule.step
    ratio = schedule.ratio()
    adv_on = weights.w_adv > 0 and discs is not None
    if adv_on and opt_d is None:
        raise InvalidArgumentError("adversarial training needs a discriminator optimizer")

    # forward cascade under scheduled sampling
    stage_la: list[Tensor] = []
    stage_ph: list[Tensor] = []
    gen_inputs = 0
    draws = 0
    real_draws = 0
    for k in range(n_stages):
        rung = batch.rungs[k]
        if k == 0:
            in_la, in_ph = rung.log_amp, rung.phase
        else:
            in_la, in_ph, mask = sample_block_inputs(
                rung.log_amp, rung.phase,
                stage_la[k - 1].data, stage_ph[k - 1].data, ratio, rng)
            draws += mask.size
            real_draws += int(mask.sum())
            gen_inputs += int(mask.size - mask.sum())
        out_la, out_ph = model.stage_forward(k, Tensor(in_la), Tensor(in_ph))
        stage_la.append(out_la)
        stage_ph.append(out_ph)

    # per-stage waveforms synthesized through the graph
    stft_cfg = model.config.stft
    stage_wav: list[Tensor] = []
    for k in range(n_stages):
        mag = F.exp(stage_la[k])
        re = mag * F.cos(stage_ph[k])
        im = mag * F.sin(stage_ph[k])
        stage_wav.append(F.istft_synth(re, im, stft_cfg, batch.clip_len))

    # discriminator update on detached fakes
    d_val = 0.0
    if adv_on:
        d_total = Tensor(np.zeros((), dtype=np.float32))
        for k in range(n_stages):
            ref = batch.rungs[k + 1]
            sd = discs.stages[k]
            pairs = (
                (sd.wave, ref.wave[:, None, :], stage_wav[k].data[:, None, :]),
                (sd.amp, ref.log_amp[:, None], stage_la[k].data[:, None]),
                (sd.phase, ref.phase[:, None], stage_ph[k].data[:, None]),
            )
            for critic, real_np, fake_np in pairs:
                loss = hinge_d_loss(critic(Tensor(real_np)), critic(Tensor(fake_np)))
                d_total = F.add(d_total, loss)
        d_val = d_total.item()
        _require_finite("d_loss", d_val, step)
        opt_d.zero_grad()
        d_total.backward()
        opt_d.step(lr)

    # generator update (adversarial scores recomputed through the updated critics)
    stages = []
    for k in range(n_stages):
        ref = batch.rungs[k + 1]
        fake_scores = []
        if adv_on:
            sd = discs.stages[k]
            bsz, nf, nt = stage_la[k].data.shape
            fake_scores = [
                sd.wave(F.reshape(stage_wav[k], (bsz, 1, batch.clip_len))),
                sd.amp(F.reshape(stage_la[k], (bsz, 1, nf, nt))),
                sd.phase(F.reshape(stage_ph[k], (bsz, 1, nf, nt))),
            ]
        stages.append(StageOutput(
            log_amp_est=stage_la[k], phase_est=stage_ph[k],
            log_amp_ref=Tensor(ref.log_amp), phase_ref=Tensor(ref.phase),
            fake_scores=fake_scores))
    g_total, parts = generator_total_loss(stages, weights)
    g_val = g_total.item()
    for name, value in parts.items():
        _require_finite(name, value, step)
    _require_finite("g_loss", g_val, step)
    opt_g.zero_grad()
    g_total.backward()
    opt_g.step(lr)

    schedule.advance()
    metrics = {"step": step, "lr": lr, "tf_ratio": ratio,
               "g_loss": g_val, "d_loss": d_val}
    metrics.update(parts)
    metrics["gen_inputs"] = gen_inputs
    metrics["real_fraction"] = (real_draws / draws) if draws else 1.0
    return metrics


# ---------------------------------------------------------------------------
# checkpoint plumbing for full training state
# ---------------------------------------------------------------------------

def training_state_tensors(model: CascadeModel, discs: DiscriminatorBank | None,
                           opt_g: AdamW, opt_d: AdamW | None) -> dict[str, np.ndarray]:
    tensors = model.state()
    tensors.update(opt_g.state(prefix="opt.g."))
    if discs is not None:
        tensors.update({f"disc.{k}": v for k, v in discs.state().items()})
    if opt_d is not None:
        tensors.update(opt_d.state(prefix="opt.d."))
    return tensors


def save_training_checkpoint(path: str, model: CascadeModel,
                             discs: DiscriminatorBank | None, opt_g: AdamW,
                             opt_d: AdamW | None, step: int) -> None:
    save_checkpoint(path, model.config,
                    training_state_tensors(model, discs, opt_g, opt_d), step)


def restore_training_state(ckpt: Checkpoint, model: CascadeModel,
                           discs: DiscriminatorBank | None, opt_g: AdamW,
                           opt_d: AdamW | None,
                           schedule: TeacherForcingSchedule) -> None:
    """Load model, discriminator, and optimizer state from a checkpoint."""
    model.load_state(model_tensors(ckpt))
    try:
        opt_g.load_state(ckpt.tensors, prefix="opt.g.")
    except InvalidArgumentError as exc:
        raise CheckpointError(f"cannot resume: {exc}") from exc
    if discs is not None:
        disc_state = {k[len("disc."):]: v for k, v in ckpt.tensors.items()
                      if k.startswith("disc.")}
        if not disc_state:
            raise CheckpointError("cannot resume: checkpoint has no discriminator state")
        discs.load_state(disc_state)
    if opt_d is not None:
        try:
            opt_d.load_state(ckpt.tensors, prefix="opt.d.")
        except InvalidArgumentError as exc:
            raise CheckpointError(f"cannot resume: {exc}") from exc
    schedule.step = ckpt.step


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: CascadeModel
    discs: DiscriminatorBank | None
    history: list[dict] = field(default_factory=list)
    checkpoint_path: str | None = None


def run_training(model: CascadeModel, features: TrainingBatch,
                 opt_cfg: OptimizerConfig, weights: LossWeights, steps: int, *,
                 discs: DiscriminatorBank | None = None,
                 schedule: TeacherForcingSchedule | None = None,
                 seed: int = 0,
                 checkpoint_dir: str | None = None,
                 checkpoint_interval: int = 0,
                 metrics_path: str | None = None,
                 resume: str | None = None,
                 log_every: int = 0,
                 on_metrics=None) -> TrainResult:
    """Train for ``steps`` optimizer steps over precomputed features.

    One epoch is one full pass over the corpus: ceil(n_clips / batch)
    steps, batch order drawn from a per-epoch permutation.  The learning
    rate decays per epoch.  Checkpoints (with optimizer and
    discriminator state) land in ``checkpoint_dir`` every
    ``checkpoint_interval`` steps plus a ``final.bwec`` at the end;
    ``resume`` restarts from such a file.  ``on_metrics``, when given, is
    called with each step's metrics record (progress reporting).
    """
    if steps < 1:
        raise InvalidArgumentError("steps must be >= 1")
    n_clips = features.n_clips
    bsz = min(opt_cfg.batch_size, n_clips)
    steps_per_epoch = math.ceil(n_clips / bsz)

    if schedule is None:
        schedule = TeacherForcingSchedule()
    opt_g = AdamW(model.named_parameters(), opt_cfg)
    opt_d = AdamW(discs.named_parameters(), opt_cfg) if discs is not None else None
    if resume is not None:
        ckpt = load_checkpoint(resume, expected_config=model.config)
        restore_training_state(ckpt, model, discs, opt_g, opt_d, schedule)

    result = TrainResult(model=model, discs=discs)
    log_fh = open(metrics_path, "a", encoding="utf-8") if metrics_path else None
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    def save(step: int, name: str) -> str:
        path = os.path.join(checkpoint_dir, name)
        save_training_checkpoint(path, model, discs, opt_g, opt_d, step)
        return path

    try:
        start = schedule.step
        for step in range(start, start + steps):
            epoch, pos = divmod(step, steps_per_epoch)
            lr = lr_at(epoch, opt_cfg)
            perm = np.random.default_rng((seed, 1, epoch)).permutation(n_clips)
            idx = perm[pos * bsz:(pos + 1) * bsz]
            rng = np.random.default_rng((seed, 2, step))
            metrics = train_step(model, discs, features.select(idx), schedule,
                                 opt_g, opt_d, weights, lr, rng)
            metrics["epoch"] = epoch
            result.history.append(metrics)
            if on_metrics is not None:
                on_metrics(metrics)
            if log_fh is not None:
                log_fh.write(json.dumps(metrics) + "\n")
                log_fh.flush()
            if log_every and (step + 1) % log_every == 0:
                print(f"step {step + 1}: g_loss {metrics['g_loss']:.4f} "
                      f"amp {metrics['amp']:.4f} tf {metrics['tf_ratio']:.4f}")
            done = step + 1
            if (checkpoint_dir and checkpoint_interval
                    and done % checkpoint_interval == 0
                    and done != start + steps):
                save(done, f"step-{done:06d}.bwec")
        if checkpoint_dir:
            result.checkpoint_path = save(schedule.step, "final.bwec")
    finally:
        if log_fh is not None:
            log_fh.close()
    return result


# ---------------------------------------------------------------------------
# config-driven entry points
# ---------------------------------------------------------------------------

def build_corpus(cfg) -> tuple[list, list]:
    """Materialize (train, test) clip lists at the container rate, cut to
    clip_len.

    Synthetic source: the training corpus uses the configured seed; the
    held-out test corpus draws fresh clips from seed+1 so it is never
    trained on.  WAV source: deterministic shuffled split of the
    directory.
    """
    from .data import SynthCorpusSpec, load_wav_corpus, slice_into_clips, synth_corpus

    container = max(cfg.cascade.rates)
    clip_len = cfg.optimizer.clip_len
    corpus = cfg.corpus
    if corpus.source == "synthetic":
        syn = corpus.synthetic
        train = synth_corpus(SynthCorpusSpec(
            n_clips=syn.n_clips, duration=syn.duration, rate=container,
            seed=syn.seed))
        n_test = max(1, round(syn.n_clips * (1.0 - corpus.split_ratio)))
        test = synth_corpus(SynthCorpusSpec(
            n_clips=n_test, duration=syn.duration, rate=container,
            seed=syn.seed + 1))
    else:
        train, test = load_wav_corpus(corpus.wav_dir, corpus.split_ratio,
                                      cfg.train.seed, expected_rate=container)
    return slice_into_clips(train, clip_len), slice_into_clips(test, clip_len)


def train_from_config(cfg, on_metrics=None) -> TrainResult:
    """Build model, critics, and corpus from a RunConfig and train."""
    from contextlib import nullcontext

    from .data import make_training_batch

    cascade = cfg.cascade_config()
    model = CascadeModel(cascade, seed=cfg.train.seed)
    weights = cfg.loss_weights()
    discs = None
    if weights.w_adv > 0:
        discs = DiscriminatorBank(cascade.n_stages,
                                  cfg.discriminator.wave_channel_cap,
                                  tuple(cfg.discriminator.spectral_channels),
                                  seed=cfg.train.seed + 1)
    train_clips, _ = build_corpus(cfg)
    features = make_training_batch(train_clips, cascade)

    if cfg.train.deterministic:
        import threadpoolctl
        ctx = threadpoolctl.threadpool_limits(limits=1)
    else:
        ctx = nullcontext()
    with ctx:
        return run_training(
            model, features, cfg.optimizer_config(), weights, cfg.train.steps,
            discs=discs, schedule=cfg.tf_schedule(), seed=cfg.train.seed,
            checkpoint_dir=cfg.train.checkpoint_dir,
            checkpoint_interval=cfg.train.checkpoint_interval,
            metrics_path=cfg.train.metrics_path, resume=cfg.train.resume,
            log_every=cfg.train.log_every, on_metrics=on_metrics)
