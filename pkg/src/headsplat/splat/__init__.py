"""Differentiable 3D Gaussian splatting: projection, tiled rasterizer, brute-force oracle."""

from __future__ import annotations

from .oracle import render_oracle
from .project import ProjectedGaussians, project
from .raster import ALPHA_MAX, T_MIN, render_tiled
from .image_io import read_png, write_png


def render_cloud(cloud, cam, background=(1.0, 1.0, 1.0), tile: int = 16, method: str = "tiled"):
    """Project a :class:`~headsplat.gsdecode.GaussianCloud` and rasterize it for ``cam``."""
    proj = project(cloud.position, cloud.scale, cloud.rotation, cloud.opacity, cloud.color, cam)
    if method == "tiled":
        return render_tiled(proj, cam.height, cam.width, background, tile)
    if method == "oracle":
        return render_oracle(proj, cam.height, cam.width, background)
    raise ValueError(f"unknown render method {method!r}")


__all__ = ["ALPHA_MAX", "ProjectedGaussians", "T_MIN", "project", "read_png", "render_cloud",
           "render_oracle", "render_tiled", "write_png"]
