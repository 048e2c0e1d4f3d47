"""HTTP service over the engine; the CLI calls the same ops in process."""

from .app import create_app

__all__ = ["create_app"]
