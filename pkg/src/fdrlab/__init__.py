"""Configuration-averaged quantum dynamics, linear response and FDR checks."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("fdrlab")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
