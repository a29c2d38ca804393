"""HTTP service exposing resampling, extension, evaluation, and training."""

from .app import create_app

__all__ = ["create_app"]
