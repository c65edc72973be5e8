"""Numerical verification engine for f-Kenmotsu geometry."""
__version__ = "0.1.0"
