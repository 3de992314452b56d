"""Discrete Griffith energies, their linearized limit and cleavage experiments in 2D."""

__version__ = "0.1.0"
