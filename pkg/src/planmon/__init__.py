"""Perception-checked execution of classical STRIPS plans."""

__version__ = "0.1.0"
