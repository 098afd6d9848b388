"""Functional actor-critic on exactly solvable finite MDPs."""

__version__ = "0.1.0"
