"""Snapshot attention for node classification on dynamic graphs."""

__version__ = "0.1.0"
