"""Numpy-backed reverse-mode autodiff with the ops this package trains on."""

from . import functional
from .gradcheck import grad_check
from .layers import GRN, Conv1d, Conv2d, LayerNorm, Module
from .tensor import Tensor, astensor, grad_enabled, no_grad

__all__ = [
    "Tensor",
    "astensor",
    "no_grad",
    "grad_enabled",
    "functional",
    "grad_check",
    "Module",
    "Conv1d",
    "Conv2d",
    "LayerNorm",
    "GRN",
]
