"""Symbolic verification of cyber-physical security protocols with timed intruders."""

__version__ = "0.1.0"
