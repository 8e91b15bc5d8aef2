"""Simulation of Schrödinger-cat breeding with homodyne conditioning."""

__version__ = "0.1.0"
