"""Desk-scale simulator and inequality lab for the 1D-in-space Boltzmann equation."""

__version__ = "0.1.0"
