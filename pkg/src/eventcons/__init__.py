"""Consensus building and evaluation for time-stamped event annotations."""

__version__ = "0.1.0"
