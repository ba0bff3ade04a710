"""Clifford measurement circuits and their classical plaquette-model duals."""

__version__ = "0.1.0"
