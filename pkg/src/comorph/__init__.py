"""Morphology-controller co-design toolkit for planar fall recovery."""

__version__ = "0.1.0"
