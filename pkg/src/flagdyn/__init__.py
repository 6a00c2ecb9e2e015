"""Dynamics of divergent sequences and Schottky groups on the flag space of RP^2."""

__version__ = "0.1.0"
