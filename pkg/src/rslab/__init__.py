"""Numerical verification lab for elliptic Ruijsenaars-Schneider systems."""

__version__ = "0.1.0"
