"""Per-ray and per-sensor embeddings: Pluecker lines, occupancy histograms, Fourier origins."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import LidarRig
from .sampling import RaySamples

__all__ = [
    "plucker",
    "HistogramEmbedder",
    "histogram",
    "histogram_embed",
    "fourier_encode",
    "SensorEmbedding",
    "sensor_embedding",
    "N_BINS",
    "EMBED_DIM",
]

N_BINS = 64
EMBED_DIM = 16


def plucker(origin, direction) -> np.ndarray:
    """``(d, o x d)`` for one ray or a batch; directions must be unit length."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    norms = np.linalg.norm(d, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("ray directions must be unit vectors")
    return np.concatenate([d, np.cross(o, d)], axis=-1)


class HistogramEmbedder:
    """Linear map ``e_h = E_h^T h`` from a 64-bin occupancy histogram to 16 dims.

    The default matrix has orthonormal columns drawn from a seeded Gaussian.
    """

    def __init__(self, matrix=None, seed: int = 42):
        if matrix is None:
            rng = np.random.default_rng(seed)
            matrix, _ = np.linalg.qr(rng.standard_normal((N_BINS, EMBED_DIM)))
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (N_BINS, EMBED_DIM):
            raise ValueError(f"embedding matrix must be {N_BINS}x{EMBED_DIM}, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("embedding matrix has non-finite entries")
        self.matrix = matrix

    @classmethod
    def load(cls, path) -> "HistogramEmbedder":
        return cls(np.load(Path(path)))

    def save(self, path) -> None:
        np.save(Path(path), self.matrix)

    def __call__(self, h) -> np.ndarray:
        return np.asarray(h, dtype=np.float64) @ self.matrix


def histogram(s, occ_prob, s_min: float | None = None, s_max: float | None = None) -> np.ndarray:
    """Normalized counts of occupied samples over 64 uniform depth bins (zeros if none)."""
    s = np.asarray(s, dtype=np.float64)
    occ = np.asarray(occ_prob) > 0
    lo = s.min() if s_min is None else s_min
    hi = s.max() if s_max is None else s_max
    h = np.zeros(N_BINS)
    if not occ.any():
        return h
    span = hi - lo if hi > lo else 1.0
    b = np.clip(np.floor((s[occ] - lo) / span * N_BINS).astype(np.int64), 0, N_BINS - 1)
    h = np.bincount(b, minlength=N_BINS).astype(np.float64)
    return h / h.sum()


def histogram_embed(samples: RaySamples, embedder: HistogramEmbedder) -> tuple[np.ndarray, np.ndarray]:
    h = histogram(samples.s, samples.occ_prob)
    return h, embedder(h)


def fourier_encode(origins, n_freq: int = 4) -> np.ndarray:
    """``[sin(2^j pi o_c) ..., cos(2^j pi o_c) ...]`` for j < n_freq, c in xyz (6 * n_freq dims)."""
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    arg = (np.pi * 2.0 ** np.arange(n_freq))[None, None, :] * o[:, :, None]   # (n, 3, F)
    return np.concatenate([np.sin(arg).reshape(len(o), -1), np.cos(arg).reshape(len(o), -1)], axis=1)


@dataclass
class SensorEmbedding:
    per_sensor: np.ndarray   # (n_sensors, 6F); zero rows for inactive sensors
    rig: np.ndarray          # (6F,) mean over active sensors
    active: np.ndarray       # (n_sensors,) bool


def sensor_embedding(rig: LidarRig, active=None, n_freq: int = 4) -> SensorEmbedding:
    n = len(rig)
    mask = np.ones(n, dtype=bool) if active is None else _active_mask(active, n)
    if not mask.any():
        raise ValueError("no sensor selected")
    e = fourier_encode(np.array([s.origin for s in rig]), n_freq)
    e[~mask] = 0.0
    return SensorEmbedding(e, e[mask].mean(axis=0), mask)


def _active_mask(active, n: int) -> np.ndarray:
    active = np.asarray(active)
    if active.dtype == bool:
        if active.shape != (n,):
            raise ValueError(f"boolean sensor mask must have length {n}")
        return active.copy()
    mask = np.zeros(n, dtype=bool)
    idx = active.astype(np.int64).ravel()
    if np.any((idx < 0) | (idx >= n)):
        raise IndexError(f"sensor index out of range for a rig of {n}")
    mask[idx] = True
    return mask
