"""Trajectory prediction over typed heterogeneous traffic scene graphs."""

__version__ = "0.1.0"
