"""Multi-view sparse depth/semantic point-map rendering from occupancy."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_grid
from ..grid import DEFAULT_CLASS_TABLE, ClassTable, SemanticOccupancyGrid
from ..io import write_depth_raw, write_pgm, write_ppm
from .gaussians import occupancy_to_gaussians
from .projection import DEFAULT_ALPHA_MIN, UtParams
from .raster import RenderedMaps, rasterize

__all__ = ["RenderOptions", "render_views", "GaussianSplatRenderer", "write_maps", "depth_to_mm"]


@dataclass
class RenderOptions:
    scale: float = 0.01
    opacity: float = 0.99
    backend: str = "ut"
    ut: UtParams = field(default_factory=UtParams)
    tile: int = 16
    alpha_min: float = DEFAULT_ALPHA_MIN
    normalize_depth: bool = True


def render_views(grid: SemanticOccupancyGrid, cameras, options: RenderOptions | None = None) -> list[RenderedMaps]:
    """Convert ``grid`` to Gaussians once and rasterize it for every camera."""
    check_grid(grid)
    cameras = list(cameras)
    if not cameras:
        raise ValueError("at least one camera is required")
    options = options or RenderOptions()
    gs = occupancy_to_gaussians(grid, options.scale, options.opacity)
    return [rasterize(gs, cam, options.backend, options.ut, options.tile, options.alpha_min,
                      options.normalize_depth) for cam in cameras]


class GaussianSplatRenderer(BaseEstimator):
    """``fit(grid)`` builds the Gaussians; ``transform(cameras)`` renders them."""

    def __init__(self, scale=0.01, opacity=0.99, backend="ut", ut_alpha=1.0, ut_beta=2.0, ut_kappa=0.0,
                 tile=16, alpha_min=DEFAULT_ALPHA_MIN, normalize_depth=True):
        self.scale = scale
        self.opacity = opacity
        self.backend = backend
        self.ut_alpha = ut_alpha
        self.ut_beta = ut_beta
        self.ut_kappa = ut_kappa
        self.tile = tile
        self.alpha_min = alpha_min
        self.normalize_depth = normalize_depth

    def _options(self) -> RenderOptions:
        return RenderOptions(self.scale, self.opacity, self.backend,
                             UtParams(self.ut_alpha, self.ut_beta, self.ut_kappa), self.tile,
                             self.alpha_min, self.normalize_depth)

    def fit(self, X: SemanticOccupancyGrid, y=None):
        check_grid(X, "X")
        self.options_ = self._options()
        self.gaussians_ = occupancy_to_gaussians(X, self.scale, self.opacity)
        return self

    def transform(self, cameras) -> list[RenderedMaps]:
        check_is_fitted(self, "gaussians_")
        o = self.options_
        return [rasterize(self.gaussians_, cam, o.backend, o.ut, o.tile, o.alpha_min, o.normalize_depth)
                for cam in cameras]


def depth_to_mm(depth: np.ndarray) -> np.ndarray:
    """Metres to 16-bit millimetres, saturating at 65535."""
    return np.clip(np.rint(np.asarray(depth) * 1000.0), 0, 65535).astype(np.uint16)


def write_maps(maps: RenderedMaps, out_dir, stem: str, table: ClassTable = DEFAULT_CLASS_TABLE,
               raw_depth: bool = True) -> list[Path]:
    """Write depth PGM (mm), optional raw f32 depth, semantic PGM and palette PPM."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}_depth.pgm", out / f"{stem}_semantic.pgm", out / f"{stem}_semantic.ppm"]
    write_pgm(paths[0], depth_to_mm(maps.depth))
    write_pgm(paths[1], maps.semantic.astype(np.uint8))
    palette = np.zeros((256, 3), dtype=np.uint8)
    pal = table.palette
    palette[: len(pal)] = pal
    write_ppm(paths[2], palette[maps.semantic])
    if raw_depth:
        paths.append(out / f"{stem}_depth.f32")
        write_depth_raw(paths[-1], maps.depth)
    return paths
