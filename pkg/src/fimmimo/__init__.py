"""Capacity maximisation for MIMO links between two flexible intelligent metasurfaces."""

__version__ = "0.1.0"
