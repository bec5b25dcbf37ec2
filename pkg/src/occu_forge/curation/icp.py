"""Point-to-point ICP with voxel downsampling and a shrinking match radius."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_cloud, same_kind
from ..geometry import PointCloud, RigidTransform

__all__ = [
    "RegistrationError",
    "IcpParams",
    "IcpResult",
    "voxel_downsample",
    "kabsch",
    "icp_register",
    "IcpRegistration",
]


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IcpParams:
    downsample: float = 0.5
    radius_start: float = 2.0
    radius_decay: float = 0.9
    radius_floor: float = 0.3
    max_iterations: int = 50
    tolerance: float = 1e-4
    refine_full: bool = True


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rmse: float
    iterations: int
    n_correspondences: int


def voxel_downsample(xyz: np.ndarray, cell: float) -> np.ndarray:
    """Centroid of the points in each occupied cell, ordered by cell key."""
    if cell <= 0 or len(xyz) == 0:
        return xyz
    keys = np.floor(xyz / cell).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, xyz)
    return sums / counts[:, None]


def kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rigid fit ``dst ~ R src + t`` via the cross-covariance SVD."""
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ U.T
    return RigidTransform(R, cd - R @ cs)


def _step_size(T: RigidTransform) -> float:
    return T.rotation_angle() + float(np.linalg.norm(T.translation))


def icp_register(source: PointCloud, target: PointCloud, init: RigidTransform | None = None,
                 params: IcpParams | None = None) -> IcpResult:
    """Estimate ``T`` such that ``T.apply(source)`` aligns with ``target``."""
    params = params or IcpParams()
    init = init or RigidTransform.identity()
    source, target = check_cloud(source, "source"), check_cloud(target, "target")
    if len(source) < 10 or len(target) < 10:
        raise ValueError(f"ICP needs at least 10 points per cloud, got {len(source)} and {len(target)}")
    src = voxel_downsample(source.xyz, params.downsample)
    tgt = voxel_downsample(target.xyz, params.downsample)
    T, radius, iterations = _icp_loop(src, cKDTree(tgt), tgt, init, params.radius_start, params, 0)
    if params.refine_full:
        # centroids of two differently anchored lattices do not coincide, which
        # leaves a few centimetres of bias; a polish on the raw points removes it
        src, tgt = source.xyz, target.xyz
        T, radius, iterations = _icp_loop(src, cKDTree(tgt), tgt, T, radius, params, iterations)
    tree = cKDTree(tgt)
    dist, _ = tree.query(T.apply(src), distance_upper_bound=radius)
    ok = np.isfinite(dist)
    rmse = float(np.sqrt(np.mean(dist[ok] ** 2))) if ok.any() else float("inf")
    return IcpResult(T, rmse, iterations, int(ok.sum()))


def _icp_loop(src, tree, tgt, T, radius, params, done):
    iterations = done
    for it in range(1, params.max_iterations + 1):
        iterations = done + it
        moved = T.apply(src)
        dist, idx = tree.query(moved, distance_upper_bound=radius)
        ok = np.isfinite(dist)
        if np.count_nonzero(ok) < 3:
            raise RegistrationError("registration diverged: no correspondences within "
                                    f"{radius:.3f} m at iteration {iterations}")
        delta = kabsch(moved[ok], tgt[idx[ok]])
        T = delta @ T
        radius = max(radius * params.radius_decay, params.radius_floor)
        if _step_size(delta) < params.tolerance:
            break
    return T, radius, iterations


class IcpRegistration(BaseEstimator):
    """Estimator form of :func:`icp_register`.

    ``fit(source, target)`` estimates ``transform_``; ``transform(X)`` moves
    points from the source frame into the target frame.
    """

    def __init__(self, downsample=0.5, radius_start=2.0, radius_decay=0.9, radius_floor=0.3,
                 max_iterations=50, tolerance=1e-4, refine_full=True, init=None):
        self.downsample = downsample
        self.radius_start = radius_start
        self.radius_decay = radius_decay
        self.radius_floor = radius_floor
        self.max_iterations = max_iterations
        self.tolerance = tolerance
        self.refine_full = refine_full
        self.init = init

    def fit(self, X, y):
        params = IcpParams(self.downsample, self.radius_start, self.radius_decay, self.radius_floor,
                           self.max_iterations, self.tolerance, self.refine_full)
        result = icp_register(check_cloud(X), check_cloud(y, "y"), self.init, params)
        self.transform_ = result.transform
        self.rmse_ = result.rmse
        self.n_iter_ = result.iterations
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        cloud = check_cloud(X)
        return same_kind(X, cloud.with_xyz(self.transform_.apply(cloud.xyz)))
