"""Simulation and estimation toolkit for evolving patent classification systems."""

__version__ = "0.1.0"
