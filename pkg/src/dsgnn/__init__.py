"""Desk-scale dual-view supergrid model for regional air-quality estimation."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DsgnnError,
    GraphError,
    LoadError,
    ProtocolError,
    ShapeError,
)
