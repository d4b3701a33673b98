"""Bitext mining from linked comparable documents and dependency annotation projection."""

__version__ = "0.1.0"
