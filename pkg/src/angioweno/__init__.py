"""High-order positivity-preserving finite-volume solver for a reduced
two-dimensional angiogenesis model."""

__version__ = "0.1.0"
