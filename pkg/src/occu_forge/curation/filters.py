"""Statistical outlier removal."""
from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_cloud, same_kind
from ..geometry import PointCloud

__all__ = ["SmallCloudWarning", "statistical_filter", "StatisticalOutlierFilter"]


class SmallCloudWarning(UserWarning):
    """A stage received too few points and passed its input through."""


def _mean_knn_distance(query: np.ndarray, ref: np.ndarray, k: int, self_match: bool) -> np.ndarray:
    tree = cKDTree(ref)
    kk = k + 1 if self_match else k
    d, _ = tree.query(query, k=kk)
    d = d.reshape(len(query), kk)
    return d[:, 1:].mean(axis=1) if self_match else d.mean(axis=1)


def statistical_filter(points: PointCloud, k_neighbors: int = 20, k: float = 2.0,
                       mode: str = "knn") -> PointCloud:
    """Drop points whose statistic exceeds ``mu + k * sigma`` over the cloud.

    ``mode="knn"`` uses each point's mean distance to its ``k_neighbors``
    nearest neighbours. ``mode="centroid"`` uses the distance to the cloud
    centroid instead and keeps points with ``|p - mu| < k * sigma``.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if not k > 0:
        raise ValueError("k must be positive")
    if mode not in ("knn", "centroid"):
        raise ValueError(f"unknown filter mode {mode!r}")
    n = len(points)
    if n == 0:
        return points
    if n < k_neighbors + 1:
        warnings.warn(f"cloud has {n} points, fewer than k_neighbors+1={k_neighbors + 1}; not filtered",
                      SmallCloudWarning, stacklevel=2)
        return points
    if mode == "centroid":
        centroid = points.xyz.mean(axis=0)
        dist = np.linalg.norm(points.xyz - centroid, axis=1)
        sigma = np.sqrt(np.mean(np.sum((points.xyz - centroid) ** 2, axis=1)))
        if sigma < 1e-12:
            return points
        return points.subset(dist < k * sigma)
    stat = _mean_knn_distance(points.xyz, points.xyz, k_neighbors, self_match=True)
    mu, sigma = stat.mean(), stat.std()
    if sigma < 1e-12:
        return points
    return points.subset(stat < mu + k * sigma)


class StatisticalOutlierFilter(BaseEstimator, TransformerMixin):
    """k-NN statistical outlier removal as a transformer.

    ``fit`` learns the neighbour-distance threshold on a reference cloud;
    ``transform`` keeps points whose mean distance to their ``k_neighbors``
    nearest reference points falls below it. ``fit_transform`` on a single
    cloud is equivalent to :func:`statistical_filter`.
    """

    def __init__(self, k_neighbors=20, k=2.0):
        self.k_neighbors = k_neighbors
        self.k = k

    def fit(self, X, y=None):
        cloud = check_cloud(X)
        if len(cloud) < self.k_neighbors + 1:
            raise ValueError(f"need at least {self.k_neighbors + 1} points to fit, got {len(cloud)}")
        stat = _mean_knn_distance(cloud.xyz, cloud.xyz, self.k_neighbors, self_match=True)
        self.reference_ = cloud.xyz
        self.mean_ = float(stat.mean())
        self.std_ = float(stat.std())
        self.threshold_ = np.inf if self.std_ < 1e-12 else self.mean_ + self.k * self.std_
        return self

    def _stat(self, cloud: PointCloud, self_match: bool) -> np.ndarray:
        return _mean_knn_distance(cloud.xyz, self.reference_, self.k_neighbors, self_match)

    def transform(self, X):
        check_is_fitted(self, "threshold_")
        cloud = check_cloud(X)
        if len(cloud) == 0:
            return X
        self_match = cloud.xyz is self.reference_ or (
            cloud.xyz.shape == self.reference_.shape and np.array_equal(cloud.xyz, self.reference_))
        kept = cloud.subset(self._stat(cloud, self_match) < self.threshold_)
        return same_kind(X, kept)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).transform(X)
