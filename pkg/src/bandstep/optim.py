"""Adam with decoupled weight decay.

The decay multiplies parameters by (1 - lr * weight_decay) separately
from the moment-based gradient step, so zero-gradient parameters still
shrink geometrically when decay is on.  State tensors can be exported
and restored for checkpoint resume.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .nn import Tensor
from .schedule import OptimizerConfig


class AdamW:

    def __init__(self, params: dict[str, Tensor], cfg: OptimizerConfig,
                 eps: float = 1e-8):
        if not params:
            raise InvalidArgumentError("optimizer needs at least one parameter")
        self.cfg = cfg
        self.eps = eps
        self.t = 0
        self._params = dict(params)
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        """Apply one update from the gradients currently on the parameters.

        Parameters whose gradient is unset are skipped entirely
        (no moment update, no decay).
        """
        self.t += 1
        b1, b2 = self.cfg.beta1, self.cfg.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        decay = self.cfg.weight_decay
        for name, p in self._params.items():
            g = p.grad
            if g is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.data = p.data - lr * update
            if decay:
                p.data = p.data * (1.0 - lr * decay)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    # -- checkpoint support --------------------------------------------------

    def state(self, prefix: str = "opt.") -> dict[str, np.ndarray]:
        out = {f"{prefix}t": np.array([self.t], dtype=np.float32)}
        for name in self._params:
            out[f"{prefix}m.{name}"] = self._m[name].astype(np.float32)
            out[f"{prefix}v.{name}"] = self._v[name].astype(np.float32)
        return out

    def load_state(self, tensors: dict[str, np.ndarray], prefix: str = "opt.") -> None:
        key = f"{prefix}t"
        if key not in tensors:
            raise InvalidArgumentError(f"optimizer state missing {key!r}")
        self.t = int(tensors[key][0])
        for name, p in self._params.items():
            for slot, store in (("m", self._m), ("v", self._v)):
                k = f"{prefix}{slot}.{name}"
                if k not in tensors:
                    raise InvalidArgumentError(f"optimizer state missing {k!r}")
                arr = np.asarray(tensors[k], dtype=p.data.dtype)
                if arr.shape != p.data.shape:
                    raise InvalidArgumentError(
                        f"optimizer state {k!r} has shape {arr.shape}, "
                        f"expected {p.data.shape}")
                store[name] = arr.copy()
