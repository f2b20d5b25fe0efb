"""Spectral geometry of functional metrics on noncommutative tori."""

__version__ = "0.1.0"
