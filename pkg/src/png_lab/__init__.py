"""Polynuclear growth simulation, last passage percolation and Bessel kernel oracles."""

__version__ = "0.1.0"
