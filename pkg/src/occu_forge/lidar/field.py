"""Signed distance field derived from an occupancy grid."""
from __future__ import annotations

import numba
import numpy as np

from ..grid import SemanticOccupancyGrid, signed_distance_grid

__all__ = ["OccupancyField", "sdf_at"]


@numba.njit(cache=True, inline="always")
def _axis(p, o, v, n):
    """Cell index, fraction and in-range flag of coordinate p along one axis."""
    c = (p - o) / v - 0.5
    inside = True
    if c < 0.0:
        c = 0.0
        inside = False
    elif c > n - 1.0:
        c = n - 1.0
        inside = False
    if n < 2:
        return 0, 0, 0.0, False
    i0 = int(np.floor(c))
    if i0 > n - 2:
        i0 = n - 2
    return i0, i0 + 1, c - i0, inside


@numba.njit(cache=True)
def sdf_grad_point(px, py, pz, f, ox, oy, oz, vx, vy, vz, grad):
    """Trilinear signed distance at a point and its analytic gradient (written to ``grad``).

    Outside the grid the value at the clamped point is extended by the
    distance to the grid bounding box.
    """
    nx, ny, nz = f.shape
    x0, x1, tx, inx = _axis(px, ox, vx, nx)
    y0, y1, ty, iny = _axis(py, oy, vy, ny)
    z0, z1, tz, inz = _axis(pz, oz, vz, nz)
    c000 = f[x0, y0, z0]
    c100 = f[x1, y0, z0]
    c010 = f[x0, y1, z0]
    c110 = f[x1, y1, z0]
    c001 = f[x0, y0, z1]
    c101 = f[x1, y0, z1]
    c011 = f[x0, y1, z1]
    c111 = f[x1, y1, z1]
    c00 = c000 + (c100 - c000) * tx
    c10 = c010 + (c110 - c010) * tx
    c01 = c001 + (c101 - c001) * tx
    c11 = c011 + (c111 - c011) * tx
    c0 = c00 + (c10 - c00) * ty
    c1 = c01 + (c11 - c01) * ty
    val = c0 + (c1 - c0) * tz
    # d/dt of the interpolant, zero along axes where the point was clamped
    dtx = ((c100 - c000) * (1 - ty) * (1 - tz) + (c110 - c010) * ty * (1 - tz)
           + (c101 - c001) * (1 - ty) * tz + (c111 - c011) * ty * tz)
    dty = (c10 - c00) * (1 - tz) + (c11 - c01) * tz
    dtz = c1 - c0
    grad[0] = dtx / vx if inx else 0.0
    grad[1] = dty / vy if iny else 0.0
    grad[2] = dtz / vz if inz else 0.0
    # distance to the grid bounding box
    dx = max(ox - px, 0.0, px - (ox + nx * vx))
    dy = max(oy - py, 0.0, py - (oy + ny * vy))
    dz = max(oz - pz, 0.0, pz - (oz + nz * vz))
    extra = np.sqrt(dx * dx + dy * dy + dz * dz)
    if extra > 0.0:
        val += extra
        if px < ox:
            grad[0] -= dx / extra
        elif dx > 0.0:
            grad[0] += dx / extra
        if py < oy:
            grad[1] -= dy / extra
        elif dy > 0.0:
            grad[1] += dy / extra
        if pz < oz:
            grad[2] -= dz / extra
        elif dz > 0.0:
            grad[2] += dz / extra
    return val


@numba.njit(cache=True)
def _sdf_batch(points, f, origin, vox, out, grads):
    g = np.empty(3)
    for i in range(len(points)):
        out[i] = sdf_grad_point(points[i, 0], points[i, 1], points[i, 2], f, origin[0], origin[1], origin[2],
                                vox[0], vox[1], vox[2], g)
        grads[i, 0] = g[0]
        grads[i, 1] = g[1]
        grads[i, 2] = g[2]


class OccupancyField:
    """Deterministic stand-in for a learned SDF: distance-transform values at
    voxel centres, trilinearly interpolated.

    Outside occupied voxels the centre value is the distance to the nearest
    occupied centre; inside it is minus the distance to the nearest empty
    centre, so the zero level set sits on voxel faces.
    """

    def __init__(self, grid: SemanticOccupancyGrid):
        self.grid = grid
        self.values = np.ascontiguousarray(signed_distance_grid(grid))
        self.origin = np.asarray(grid.origin, dtype=np.float64)
        self.voxel_size = np.asarray(grid.voxel_size, dtype=np.float64)

    def sdf(self, points, return_grad: bool = False):
        pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
        out = np.empty(len(pts))
        grads = np.empty((len(pts), 3))
        _sdf_batch(pts, self.values, self.origin, self.voxel_size, out, grads)
        return (out, grads) if return_grad else out

    def geometry_feature(self, points) -> np.ndarray:
        """Per-point ``e_g = (f, grad f)``."""
        f, g = self.sdf(points, return_grad=True)
        return np.column_stack([f, g])


def sdf_at(field: OccupancyField, p) -> float:
    return float(field.sdf(np.asarray(p, dtype=np.float64).reshape(1, 3))[0])
