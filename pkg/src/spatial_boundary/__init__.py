"""Nonparametric spatial boundary estimation."""
__version__ = "0.1.0"
