"""Simulation-ready low-voltage grid models from street, building and substation data."""

__version__ = "0.1.0"
