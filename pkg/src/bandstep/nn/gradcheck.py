"""Finite-difference verification of analytic gradients.

Central differences at double precision against a scalar projection of
the op output.  The projection weights are drawn from a seeded generator
so every output element influences the scalar.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from .tensor import Tensor

_ABS_FALLBACK = 1e-6


def grad_check(fn, inputs, eps: float = 1e-5, seed: int = 0) -> float:
    """Return the worst element-wise gradient error of ``fn`` at ``inputs``.

    ``fn`` maps the given Tensors to one Tensor.  Errors are relative,
    falling back to absolute where the reference magnitude is below 1e-6.
    Inputs must be float64 for the differences to resolve.
    """
    tensors = []
    for x in inputs:
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64),
                                                   requires_grad=True)
        if t.dtype != np.float64:
            raise InvalidArgumentError("grad_check requires float64 inputs")
        t.grad = None
        tensors.append(t)

    out = fn(*tensors)
    proj = np.random.default_rng(seed).standard_normal(out.data.shape)
    loss = (out * Tensor(proj)).sum()
    loss.backward()

    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = float((fn(*tensors).data * proj).sum())
            flat[i] = keep - eps
            dn = float((fn(*tensors).data * proj).sum())
            flat[i] = keep
            numeric[i] = (up - dn) / (2.0 * eps)
        numeric = numeric.reshape(t.data.shape)
        denom = np.maximum(np.abs(numeric), _ABS_FALLBACK)
        err = np.abs(analytic - numeric) / np.where(
            np.abs(numeric) < _ABS_FALLBACK, 1.0, denom)
        worst = max(worst, float(err.max()))
    return worst
