"""Plumbed isometric tensor-network states, their sequential circuits and diagnostics."""

__version__ = "0.1.0"
