"""Alkaline-earth atoms as few-qubit registers: detection and gate simulations."""

__version__ = "0.1.0"
