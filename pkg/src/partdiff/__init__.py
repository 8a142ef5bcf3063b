"""Diffusion-based 6-DoF pose generation for multi-part 3D assembly."""

__version__ = "0.1.0"
