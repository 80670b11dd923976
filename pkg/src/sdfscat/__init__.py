"""Mesh-free 2D inverse acoustic obstacle scattering with neural signed
distance functions and the implicit boundary integral method."""

__version__ = "0.1.0"
