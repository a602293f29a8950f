"""Crank-Nicolson CutFEM solver for the heat equation on moving domains."""

__version__ = "0.1.0"
