"""Input coercion shared by the estimator wrappers."""
from __future__ import annotations

import numpy as np

from .geometry import PointCloud
from .grid import SemanticOccupancyGrid


def check_cloud(X, name: str = "X") -> PointCloud:
    """Accept a PointCloud or an (N, 3) array-like; reject NaNs."""
    if isinstance(X, PointCloud):
        cloud = X
    else:
        arr = np.asarray(X, dtype=np.float64)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"{name} must have shape (n_points, 3), got {arr.shape}")
        cloud = PointCloud(arr)
    if not np.all(np.isfinite(cloud.xyz)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return cloud


def same_kind(template, cloud: PointCloud):
    """Return ``cloud`` as an array if ``template`` was an array."""
    return cloud if isinstance(template, PointCloud) else cloud.xyz


def check_grid(grid, name: str = "grid") -> SemanticOccupancyGrid:
    if not isinstance(grid, SemanticOccupancyGrid):
        raise TypeError(f"{name} must be a SemanticOccupancyGrid, got {type(grid).__name__}")
    return grid


def check_positive(value, name: str, allow_zero: bool = False) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return value


def check_unit_interval(value, name: str, closed_low: bool = False) -> float:
    value = float(value)
    ok = (0.0 <= value <= 1.0) if closed_low else (0.0 < value <= 1.0)
    if not ok:
        raise ValueError(f"{name} must lie in {'[0, 1]' if closed_low else '(0, 1]'}, got {value}")
    return value
