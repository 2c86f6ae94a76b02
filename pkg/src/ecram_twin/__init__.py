"""Computational twin of an oxide-ion synaptic transistor."""

__version__ = "0.1.0"
