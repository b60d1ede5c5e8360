"""HTTP service exposing splits, tail fits, gradient checks, and training jobs."""

from .app import create_app

__all__ = ["create_app"]
