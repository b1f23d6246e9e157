"""Single-image full-head reconstruction as 3D Gaussians, in numpy."""

__version__ = "0.1.0"
