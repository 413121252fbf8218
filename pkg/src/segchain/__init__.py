"""Segmented-chain surface-code and gauge-code simulation toolkit."""

__version__ = "0.1.0"
