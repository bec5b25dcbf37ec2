"""Sparse Gaussian-splat rendering of occupancy into depth and semantic maps."""
from .gaussians import GaussianPrimitive, GaussianSet, occupancy_to_gaussians
from .projection import Projected, UtParams, project_ewa, project_gaussians, project_ut, sigma_points, ut_weights
from .raster import RenderedMaps, rasterize
from .renderer import GaussianSplatRenderer, RenderOptions, depth_to_mm, render_views, write_maps

__all__ = [
    "GaussianPrimitive", "GaussianSet", "occupancy_to_gaussians", "Projected", "UtParams",
    "project_ewa", "project_gaussians", "project_ut", "sigma_points", "ut_weights", "RenderedMaps",
    "rasterize", "GaussianSplatRenderer", "RenderOptions", "depth_to_mm", "render_views", "write_maps",
]
