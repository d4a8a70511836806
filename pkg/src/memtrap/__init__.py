"""Simulation toolkit for suspended-membrane waveguide atom traps."""
__version__ = "0.1.0"
