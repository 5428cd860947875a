"""Embedding transfer with relaxed relation labels."""

__version__ = "0.1.0"
