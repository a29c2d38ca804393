"""Training schedules: teacher-forcing ratio decay and learning rate decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class TeacherForcingSchedule:
    """Probability of feeding a stage the real (not generated) input.

    The ratio decays once per mini-batch: ratio(step) equals
    initial_ratio * decay ** step, so it never rises and never exceeds
    the initial value.
    """

    initial_ratio: float = 0.75
    decay: float = 0.999995
    step: int = 0

    def __post_init__(self):
        if not 0.0 <= self.initial_ratio <= 1.0:
            raise InvalidArgumentError("initial_ratio must be in [0, 1]")
        if not 0.0 < self.decay <= 1.0:
            raise InvalidArgumentError("decay must be in (0, 1]")
        if self.step < 0:
            raise InvalidArgumentError("step must be >= 0")

    def ratio_at(self, step: int) -> float:
        if step < 0:
            raise InvalidArgumentError("step must be >= 0")
        return self.initial_ratio * self.decay ** step

    def ratio(self) -> float:
        return self.ratio_at(self.step)

    def advance(self) -> None:
        self.step += 1


def tf_ratio(schedule: TeacherForcingSchedule, step: int) -> float:
    return schedule.ratio_at(step)


@dataclass(frozen=True)
class OptimizerConfig:
    """Optimizer and batching defaults for the published operating point."""

    lr0: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    weight_decay: float = 0.01
    lr_decay_per_epoch: float = 0.999
    batch_size: int = 16
    clip_len: int = 8000

    def __post_init__(self):
        if not 0.0 < self.beta1 < self.beta2 < 1.0:
            raise InvalidArgumentError(
                f"need 0 < beta1 < beta2 < 1, got {self.beta1}, {self.beta2}")
        if self.lr0 <= 0:
            raise InvalidArgumentError("lr0 must be > 0")
        if self.weight_decay < 0 or not np.isfinite(self.weight_decay):
            raise InvalidArgumentError("weight_decay must be finite and >= 0")
        if not 0.0 < self.lr_decay_per_epoch <= 1.0:
            raise InvalidArgumentError("lr_decay_per_epoch must be in (0, 1]")
        if self.batch_size < 1 or self.clip_len < 1:
            raise InvalidArgumentError("batch_size and clip_len must be >= 1")


def lr_at(epoch: int, cfg: OptimizerConfig) -> float:
    """Learning rate for a 0-based epoch index."""
    if epoch < 0:
        raise InvalidArgumentError("epoch must be >= 0")
    return cfg.lr0 * cfg.lr_decay_per_epoch ** epoch
