"""Hybrid occupancy-map + semantic Gaussian splatting active mapping simulator."""

__version__ = "0.1.0"
