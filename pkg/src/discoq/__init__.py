"""Quantum and classical DisCoCat models for compositional caption matching."""

__version__ = "0.1.0"
