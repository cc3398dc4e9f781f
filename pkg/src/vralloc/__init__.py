"""Correlation-aware spectrum and compute allocation for wireless VR small cells."""

__version__ = "0.1.0"
