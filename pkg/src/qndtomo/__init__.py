"""Parallel tomography of quantum non-demolition measurements."""

__version__ = "0.1.0"
