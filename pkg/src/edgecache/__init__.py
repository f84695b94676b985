"""Simulation and analysis toolkit for cache-enabled wireless networks."""

__version__ = "0.1.0"
