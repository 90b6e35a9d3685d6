"""Simulator for photon down-conversion in a 2D quantum ring coupled to quantized photon modes."""

__version__ = "0.1.0"
