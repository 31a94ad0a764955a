"""Simulation toolkit for PT-symmetry breaking via ancilla dilation."""

__version__ = "0.1.0"
