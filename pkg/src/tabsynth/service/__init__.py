"""HTTP service exposing train, sample, impute, evaluate, and bench-gen."""

from .app import create_app

__all__ = ["create_app"]
