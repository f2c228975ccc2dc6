"""Ueda obstruction classes, flat line bundles and nine-point blow-ups."""

__version__ = "0.1.0"
