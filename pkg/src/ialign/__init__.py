"""Interference alignment over MIMO-OFDM interference channels."""

__version__ = "0.1.0"
