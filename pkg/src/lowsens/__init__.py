"""Numerical lab for the low-sensitivity bias of attention models."""

__version__ = "0.1.0"
