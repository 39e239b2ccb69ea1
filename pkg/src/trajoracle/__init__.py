"""Deterministic harness for visual-map next-location prediction."""

__version__ = "0.1.0"
