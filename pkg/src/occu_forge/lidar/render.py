"""Logistic-density volume rendering along rays, ray features and output heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numba
import numpy as np

from ..grid import DEFAULT_CLASS_TABLE
from .field import OccupancyField

__all__ = [
    "VolumeRender",
    "render_weights",
    "composite_depth",
    "volume_render",
    "ray_feature",
    "HitInfo",
    "HeadModel",
    "AnalyticHead",
    "PHI_FLOOR",
]

PHI_FLOOR = 1e-12
DROP_NONE, DROP_PRIOR, DROP_RENDER = 0, 1, 2


@numba.njit(cache=True, inline="always")
def logistic(x, s):
    z = s * x
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@numba.njit(cache=True)
def weights_inplace(f, s_sharp, w):
    """Fill ``w`` with alpha-compositing weights; returns their sum."""
    n = len(f)
    T = 1.0
    total = 0.0
    prev = max(logistic(f[0], s_sharp), PHI_FLOOR)
    for i in range(n - 1):
        nxt = max(logistic(f[i + 1], s_sharp), PHI_FLOOR)
        beta = (prev - nxt) / prev
        if beta < 0.0:
            beta = 0.0
        w[i] = T * beta
        total += w[i]
        T *= 1.0 - beta
        prev = nxt
    if n > 0:
        w[n - 1] = 0.0
    return total


def render_weights(f, s_sharp: float = 10.0) -> np.ndarray:
    """Per-sample weights ``w_i = prod_{j<i}(1 - beta_j) beta_i``; the last sample gets 0."""
    f = np.ascontiguousarray(f, dtype=np.float64)
    if s_sharp <= 0:
        raise ValueError("s_sharp must be positive")
    w = np.zeros(len(f))
    if len(f) >= 2:
        weights_inplace(f, float(s_sharp), w)
    return w


@dataclass
class VolumeRender:
    depth: float
    weights: np.ndarray
    transmittance: float
    dropped: bool


def composite_depth(s, f, s_sharp: float = 10.0, w_min: float = 1e-3, normalize: bool = True) -> VolumeRender:
    """Depth from sample depths ``s`` and SDF values ``f``.

    The ray is dropped when fewer than two samples exist or the total
    weight does not exceed ``w_min``.
    """
    s = np.asarray(s, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if s.shape != f.shape:
        raise ValueError("s and f must have the same length")
    if len(s) < 2:
        return VolumeRender(0.0, np.zeros(len(s)), 1.0, True)
    if np.any(np.diff(s) < 0):
        raise ValueError("sample depths must be ascending")
    w = render_weights(f, s_sharp)
    total = float(w.sum())
    T = 1.0 - total
    if total <= w_min:
        return VolumeRender(0.0, w, T, True)
    depth = float(w @ s)
    return VolumeRender(depth / total if normalize else depth, w, T, False)


def volume_render(origin, direction, field: OccupancyField, resampled, s_sharp: float = 10.0,
                  w_min: float = 1e-3, normalize: bool = True) -> VolumeRender:
    pts = np.asarray(origin, float).reshape(1, 3) + np.asarray(resampled, float)[:, None] * np.asarray(direction, float)
    f = field.sdf(pts) if len(pts) else np.zeros(0)
    return composite_depth(resampled, f, s_sharp, w_min, normalize)


def ray_feature(weights, features) -> np.ndarray:
    """``v_r = sum_i w_i u_i``."""
    w = np.asarray(weights, dtype=np.float64)
    u = np.asarray(features, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if len(w) != len(u):
        raise ValueError(f"{len(w)} weights for {len(u)} feature rows")
    return w @ u


@dataclass
class HitInfo:
    position: np.ndarray
    class_id: np.ndarray
    cos_incidence: np.ndarray
    depth: np.ndarray
    dropped: np.ndarray


class HeadModel(Protocol):
    """Any pure map from (ray feature, hit) to (intensity, drop probability) in [0, 1]."""

    def __call__(self, v_r: np.ndarray, hit: HitInfo) -> tuple[np.ndarray, np.ndarray]: ...


@dataclass
class AnalyticHead:
    """``intensity = rho(class) |cos| exp(-depth / attenuation)``;
    ``drop = clip(1 - |cos|) * p_graze``, or 1 for dropped rays."""

    reflectivity: np.ndarray = None
    attenuation: float = 80.0
    p_graze: float = 0.3

    def __post_init__(self):
        if self.reflectivity is None:
            self.reflectivity = DEFAULT_CLASS_TABLE.reflectivity
        self.reflectivity = np.asarray(self.reflectivity, dtype=np.float64)
        if self.attenuation <= 0:
            raise ValueError("attenuation must be positive")

    def __call__(self, v_r, hit: HitInfo):
        cls = np.asarray(hit.class_id, dtype=np.int64)
        rho = np.where(cls < len(self.reflectivity), self.reflectivity[np.minimum(cls, len(self.reflectivity) - 1)], 0.0)
        c = np.abs(np.asarray(hit.cos_incidence, dtype=np.float64))
        dropped = np.asarray(hit.dropped, dtype=bool)
        intensity = np.clip(rho * c * np.exp(-np.asarray(hit.depth, dtype=np.float64) / self.attenuation), 0.0, 1.0)
        drop = np.clip(np.clip(1.0 - c, 0.0, 1.0) * self.p_graze + dropped, 0.0, 1.0)
        return np.where(dropped, 0.0, intensity), drop


def apply_head(head: Callable, v_r, hit: HitInfo) -> tuple[np.ndarray, np.ndarray]:
    intensity, drop = head(v_r, hit)
    intensity = np.asarray(intensity, dtype=np.float64)
    drop = np.asarray(drop, dtype=np.float64)
    if np.any((intensity < 0) | (intensity > 1)) or np.any((drop < 0) | (drop > 1)):
        raise ValueError("head outputs must lie in [0, 1]")
    return intensity, drop
