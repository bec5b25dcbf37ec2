"""Range-map projection of per-ray returns and the azimuthal smoothness metric."""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["RangeMap", "range_project", "smoothness_loss", "save_rmap", "load_rmap"]

RMAP_MAGIC = b"RMAP"


@dataclass
class RangeMap:
    depth: np.ndarray                  # (H, W), 0 = no return
    hist: np.ndarray                   # (C, H, W)
    el_range: tuple = (-np.pi / 2, np.pi / 2)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2:
            raise ValueError("depth must be 2D")
        if self.hist is None:
            self.hist = np.zeros((0,) + self.depth.shape)
        self.hist = np.asarray(self.hist, dtype=np.float64)
        if self.hist.shape[1:] != self.depth.shape:
            raise ValueError(f"hist shape {self.hist.shape} does not match depth {self.depth.shape}")
        if np.any(self.depth < 0):
            raise ValueError("depths must be non-negative")


def angles(directions) -> tuple[np.ndarray, np.ndarray]:
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    az = np.arctan2(d[:, 1], d[:, 0])
    el = np.arctan2(d[:, 2], np.hypot(d[:, 0], d[:, 1]))
    return az, el


def bin_index(az, el, H: int, W: int, el_range) -> tuple[np.ndarray, np.ndarray]:
    el_min, el_max = el_range
    span = el_max - el_min if el_max > el_min else 1.0
    row = np.clip(np.floor((el - el_min) / span * H).astype(np.int64), 0, H - 1)
    # azimuth over [-pi, pi); +pi folds onto the first column
    col = np.floor((az + np.pi) / (2 * np.pi) * W).astype(np.int64) % W
    return row, col


def range_project(directions, depth, hist=None, H: int = 64, W: int = 1024, el_range=None) -> RangeMap:
    """Bin returns by (elevation, azimuth) of their direction; nearest return wins a cell.

    ``depth`` of 0 marks a dropped ray, which never fills a cell. When
    ``el_range`` is omitted the elevation span of ``directions`` is used.
    """
    if H < 2 or W < 2:
        raise ValueError("range map needs at least 2 rows and 2 columns")
    depth = np.asarray(depth, dtype=np.float64)
    az, el = angles(directions)
    if len(az) != len(depth):
        raise ValueError("one depth per direction required")
    if el_range is None:
        el_range = (float(el.min()), float(el.max())) if len(el) else (-np.pi / 2, np.pi / 2)
    C = 0 if hist is None else np.asarray(hist).shape[1]
    out_d = np.zeros((H, W))
    out_h = np.zeros((C, H, W))
    hit = depth > 0
    if hit.any():
        row, col = bin_index(az[hit], el[hit], H, W, el_range)
        d = depth[hit]
        cell = row * W + col
        # nearest first; stable so equal depths keep ray order
        order = np.lexsort((d, cell))
        first = np.ones(len(order), dtype=bool)
        first[1:] = cell[order][1:] != cell[order][:-1]
        win = order[first]
        out_d.ravel()[cell[win]] = d[win]
        if C:
            hsel = np.asarray(hist, dtype=np.float64)[hit][win]
            out_h.reshape(C, -1)[:, cell[win]] = hsel.T
    return RangeMap(out_d, out_h, (float(el_range[0]), float(el_range[1])))


def smoothness_loss(rmap: RangeMap, exclude_drops: bool = True) -> float:
    """Mean of ``|d_x depth| * exp(-||d_x hist||_1)`` over azimuth neighbours (wrapping).

    With ``exclude_drops`` pairs touching an empty cell are ignored.
    """
    d = rmap.depth
    dd = np.abs(np.roll(d, -1, axis=1) - d)
    if rmap.hist.shape[0]:
        dh = np.abs(np.roll(rmap.hist, -1, axis=2) - rmap.hist).sum(axis=0)
    else:
        dh = np.zeros_like(d)
    valid = (d > 0) & (np.roll(d, -1, axis=1) > 0) if exclude_drops else np.ones(d.shape, dtype=bool)
    if not valid.any():
        warnings.warn("no valid neighbour pairs for the smoothness metric", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.mean(dd[valid] * np.exp(-dh[valid])))


def save_rmap(path, rmap: RangeMap) -> None:
    """``RMAP`` + H, W, C (u32 LE), f32 depth plane, then C f32 histogram planes."""
    H, W = rmap.depth.shape
    C = rmap.hist.shape[0]
    with open(path, "wb") as fh:
        fh.write(RMAP_MAGIC + struct.pack("<III", H, W, C))
        fh.write(rmap.depth.astype("<f4").tobytes())
        fh.write(rmap.hist.astype("<f4").tobytes())


def load_rmap(path) -> RangeMap:
    data = Path(path).read_bytes()
    if data[:4] != RMAP_MAGIC:
        raise ValueError(f"{path}: not an RMAP file")
    H, W, C = struct.unpack_from("<III", data, 4)
    need = 16 + 4 * H * W * (1 + C)
    if len(data) != need:
        raise ValueError(f"{path}: expected {need} bytes, found {len(data)}")
    depth = np.frombuffer(data, "<f4", H * W, 16).reshape(H, W).astype(np.float64)
    hist = np.frombuffer(data, "<f4", C * H * W, 16 + 4 * H * W).reshape(C, H, W).astype(np.float64)
    return RangeMap(depth, hist)
