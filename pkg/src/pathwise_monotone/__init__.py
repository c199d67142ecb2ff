"""Pathwise sewing, Young integration and monotone evolution equations on sampled grids."""

__version__ = "0.1.0"
