"""Numerical experiments and implication reasoning for input-to-state stability."""

__version__ = "0.1.0"
