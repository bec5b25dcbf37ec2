"""3D Gaussian primitives built from occupancy voxels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._validation import check_positive, check_unit_interval
from ..grid import SemanticOccupancyGrid

__all__ = ["GaussianPrimitive", "GaussianSet", "occupancy_to_gaussians"]

_SYM_TOL = 1e-12


def _check_cov(cov: np.ndarray) -> None:
    if np.any(np.abs(cov - np.swapaxes(cov, -1, -2)) > _SYM_TOL):
        raise ValueError("covariance must be symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as err:
        raise ValueError("covariance must be positive definite") from err


@dataclass(frozen=True, eq=False)
class GaussianPrimitive:
    mean: np.ndarray
    cov: np.ndarray
    opacity: float
    label: int

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64).reshape(3))
        cov = np.asarray(self.cov, dtype=np.float64).reshape(3, 3)
        _check_cov(cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "opacity", check_unit_interval(self.opacity, "opacity"))
        object.__setattr__(self, "label", int(self.label))


class GaussianSet:
    """Structure-of-arrays storage for N Gaussians."""

    def __init__(self, means, covs, opacities, labels, validate: bool = True):
        self.means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
        n = len(self.means)
        self.covs = np.asarray(covs, dtype=np.float64).reshape(n, 3, 3)
        self.opacities = np.broadcast_to(np.asarray(opacities, dtype=np.float64), (n,)).copy()
        self.labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), (n,)).copy()
        if validate and n:
            _check_cov(self.covs)
            if np.any(self.opacities <= 0) or np.any(self.opacities > 1):
                raise ValueError("opacities must lie in (0, 1]")
            if np.any(self.labels < 1) or np.any(self.labels > 255):
                raise ValueError("labels must be class ids in 1..255")

    def __len__(self) -> int:
        return len(self.means)

    def __getitem__(self, i: int) -> GaussianPrimitive:
        return GaussianPrimitive(self.means[i], self.covs[i], self.opacities[i], self.labels[i])

    def subset(self, index) -> "GaussianSet":
        return GaussianSet(self.means[index], self.covs[index], self.opacities[index], self.labels[index],
                           validate=False)

    @classmethod
    def from_primitives(cls, prims) -> "GaussianSet":
        prims = list(prims)
        if not prims:
            return cls.empty()
        return cls([p.mean for p in prims], [p.cov for p in prims], [p.opacity for p in prims],
                   [p.label for p in prims])

    @classmethod
    def empty(cls) -> "GaussianSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3, 3)), np.zeros(0), np.zeros(0, dtype=np.int64))


def occupancy_to_gaussians(grid: SemanticOccupancyGrid, scale: float = 0.01,
                           opacity: float = 0.99) -> GaussianSet:
    """One isotropic Gaussian per occupied voxel, centred on the voxel."""
    scale = check_positive(scale, "scale")
    opacity = check_unit_interval(opacity, "opacity")
    idx = grid.occupied_indices()
    n = len(idx)
    covs = np.broadcast_to(np.eye(3) * scale * scale, (n, 3, 3))
    labels = grid.classes[idx[:, 0], idx[:, 1], idx[:, 2]] if n else np.zeros(0, dtype=np.int64)
    return GaussianSet(grid.voxel_to_world_center(idx), covs, opacity, labels, validate=False)
