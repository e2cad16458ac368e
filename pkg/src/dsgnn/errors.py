"""Exception hierarchy shared across the package."""


class DsgnnError(Exception):
    """Base class for all package errors."""


class ShapeError(DsgnnError):
    """Array shapes are incompatible for the requested operation."""


class ConfigError(DsgnnError):
    """Invalid configuration value or file."""


class ProtocolError(DsgnnError):
    """Evaluation-protocol precondition violated (folds, target sets, splits)."""


class LoadError(DsgnnError):
    """Dataset manifest or raw file is missing, malformed, or inconsistent."""


class GraphError(DsgnnError):
    """Supergrid graph cannot be built (e.g. fewer than two nodes)."""
