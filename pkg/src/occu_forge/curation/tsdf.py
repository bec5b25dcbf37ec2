"""Surface densification by TSDF fusion and zero-crossing extraction.

A deterministic stand-in for learned surface reconstruction: every input
point contributes a signed distance ``n . (x - p)`` to the voxels inside a
ball of ``truncation`` voxels around it, where ``n`` is a PCA normal oriented
towards free space. Voxels where the fused field changes sign against a
face neighbour are emitted as the densified surface.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_cloud, same_kind
from ..geometry import PointCloud
from .filters import SmallCloudWarning

__all__ = ["DensifyParams", "estimate_normals", "densify", "TsdfDensifier"]


@dataclass(frozen=True)
class DensifyParams:
    tsdf_voxel: float = 0.125
    truncation_voxels: int = 3
    normal_neighbors: int = 24
    min_points: int = 50


def estimate_normals(xyz: np.ndarray, k: int, viewpoints: np.ndarray | None = None) -> np.ndarray:
    """Unit PCA normals oriented towards ``viewpoints`` (or away from the centroid)."""
    k = min(k, len(xyz))
    _, idx = cKDTree(xyz).query(xyz, k=k)
    nb = xyz[idx.reshape(len(xyz), k)]
    centred = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    if viewpoints is not None:
        ref = viewpoints - xyz
    else:
        ref = xyz - xyz.mean(axis=0)
        weak = np.abs(np.einsum("ij,ij->i", normals, ref)) < 1e-6 * (1.0 + np.linalg.norm(ref, axis=1))
        ref[weak] = (0.0, 0.0, 1.0)
    flip = np.einsum("ij,ij->i", normals, ref) < 0
    normals[flip] *= -1.0
    return normals


def _ball_offsets(r: int) -> np.ndarray:
    g = np.arange(-r, r + 1)
    o = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    return o[np.sum(o * o, axis=1) <= r * r]


def densify(points: PointCloud, params: DensifyParams | None = None,
            origins: np.ndarray | None = None) -> PointCloud:
    """Densified surface points (TSDF voxel centres at the zero crossing).

    ``origins`` optionally gives the sensor position each point was observed
    from; it decides which side of the surface is free space.
    """
    params = params or DensifyParams()
    if len(points) < params.min_points:
        warnings.warn(f"densify got {len(points)} points (< {params.min_points}); passing through",
                      SmallCloudWarning, stacklevel=2)
        return points
    h = float(params.tsdf_voxel)
    if origins is not None:
        origins = np.asarray(origins, dtype=np.float64).reshape(len(points), 3)

    # one representative point (and viewpoint) per TSDF voxel
    keys = np.floor(points.xyz / h).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    xyz = np.zeros((len(counts), 3))
    np.add.at(xyz, inv, points.xyz)
    xyz /= counts[:, None]
    view = None
    if origins is not None:
        view = np.zeros_like(xyz)
        np.add.at(view, inv, origins)
        view /= counts[:, None]
    normals = estimate_normals(xyz, params.normal_neighbors, view)

    r = int(params.truncation_voxels)
    offsets = _ball_offsets(r)
    base = np.floor(xyz / h).astype(np.int64)
    lo = base.min(axis=0) - r - 1
    dims = base.max(axis=0) + r + 2 - lo
    cells = (base[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
    centres = (cells + 0.5) * h
    pid = np.repeat(np.arange(len(xyz)), len(offsets))
    sdf = np.einsum("ij,ij->i", centres - xyz[pid], normals[pid])
    keep = np.abs(sdf) <= r * h
    cells, sdf = cells[keep], sdf[keep]
    rel = cells - lo
    lin = rel[:, 0] + dims[0] * (rel[:, 1] + dims[1] * rel[:, 2])
    ulin, uinv = np.unique(lin, return_inverse=True)
    uinv = uinv.reshape(-1)
    field = np.bincount(uinv, weights=sdf) / np.bincount(uinv)

    strides = np.array([1, dims[0], dims[0] * dims[1]], dtype=np.int64)
    surface = np.zeros(len(ulin), dtype=bool)
    for stride in strides:
        j = np.searchsorted(ulin, ulin + stride)
        j_ok = j < len(ulin)
        has = np.zeros(len(ulin), dtype=bool)
        has[j_ok] = ulin[j[j_ok]] == ulin[j_ok] + stride
        a = np.flatnonzero(has)
        b = j[a]
        cross = np.signbit(field[a]) != np.signbit(field[b])
        a, b = a[cross], b[cross]
        fa, fb = np.abs(field[a]), np.abs(field[b])
        surface[a[fa <= fb]] = True
        surface[b[fb <= fa]] = True
    sel = ulin[surface]
    zi = sel // (dims[0] * dims[1])
    yi = (sel // dims[0]) % dims[1]
    xi = sel % dims[0]
    out = (np.stack([xi, yi, zi], axis=1) + lo + 0.5) * h
    return PointCloud(out)


class TsdfDensifier(BaseEstimator, TransformerMixin):
    """Stateless transformer wrapping :func:`densify`."""

    def __init__(self, tsdf_voxel=0.125, truncation_voxels=3, normal_neighbors=24, min_points=50):
        self.tsdf_voxel = tsdf_voxel
        self.truncation_voxels = truncation_voxels
        self.normal_neighbors = normal_neighbors
        self.min_points = min_points

    def fit(self, X, y=None):
        check_cloud(X)
        return self

    def transform(self, X, origins=None):
        params = DensifyParams(self.tsdf_voxel, self.truncation_voxels, self.normal_neighbors,
                               self.min_points)
        return same_kind(X, densify(check_cloud(X), params, origins))
