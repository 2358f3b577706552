"""Particle-level simulation of molecular communication in blood vessels."""

__version__ = "0.1.0"
