"""Tile-based front-to-back alpha compositing of projected Gaussians."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .gaussians import GaussianSet
from .projection import DEFAULT_ALPHA_MIN, Projected, UtParams, project_gaussians

__all__ = ["RenderedMaps", "rasterize", "sort_order", "TRANSMITTANCE_STOP", "STOP_TOLERANCE",
           "MAX_CONDITION"]

TRANSMITTANCE_STOP = 1e-4
STOP_TOLERANCE = 1e-7
MAX_CONDITION = 1e12


@dataclass
class RenderedMaps:
    depth: np.ndarray      # (H, W) metres, 0 where nothing was hit
    semantic: np.ndarray   # (H, W) class ids, 0 where nothing was hit
    coverage: np.ndarray   # (H, W) accumulated opacity in [0, 1]
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def sort_order(proj: Projected, gs: GaussianSet, index: np.ndarray) -> np.ndarray:
    """Front-to-back order of ``index`` that does not depend on input order.

    Ties in depth are broken by every other attribute, so only exact
    duplicates keep their relative (insertion) order, and those composite
    identically anyway.
    """
    m, c = proj.mean2d[index], proj.cov2d[index]
    keys = (index, c[:, 1, 1], c[:, 0, 1], c[:, 0, 0], gs.opacities[index], gs.labels[index],
            m[:, 1], m[:, 0], proj.depth[index])
    return index[np.lexsort(keys)]


def _conditioning(cov2d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b, d = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * d - b * b
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(np.maximum(half_tr * half_tr - det, 0.0))
    lo, hi = half_tr - disc, half_tr + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / lo, np.inf)
    return det, cond


@numba.njit(cache=True)
def _bin_tiles(x0, x1, y0, y1, tile, n_tx, n_ty):
    """CSR lists of Gaussians per tile, preserving input (depth) order."""
    n = len(x0)
    counts = np.zeros(n_tx * n_ty + 1, dtype=np.int64)
    for i in range(n):
        for ty in range(y0[i] // tile, y1[i] // tile + 1):
            for tx in range(x0[i] // tile, x1[i] // tile + 1):
                counts[ty * n_tx + tx + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    items = np.empty(offsets[-1], dtype=np.int64)
    for i in range(n):
        for ty in range(y0[i] // tile, y1[i] // tile + 1):
            for tx in range(x0[i] // tile, x1[i] // tile + 1):
                t = ty * n_tx + tx
                items[fill[t]] = i
                fill[t] += 1
    return offsets, items


@numba.njit(parallel=True, cache=True)
def _composite_tiles(offsets, items, mx, my, ca, cb, cc, op, z, lab, n_cls, width, height, tile, n_tx,
                     alpha_min, t_stop, tol, normalize, depth, sem, cov):
    n_tiles = len(offsets) - 1
    for t in numba.prange(n_tiles):
        lo, hi = offsets[t], offsets[t + 1]
        if lo == hi:
            continue
        ty, tx = t // n_tx, t % n_tx
        z_far = z[items[hi - 1]]
        weights = np.zeros(n_cls)
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                acc_d = 0.0
                acc_w = 0.0
                weights[:] = 0.0
                for k in range(lo, hi):
                    i = items[k]
                    dx = px - mx[i]
                    dy = py - my[i]
                    q = ca[i] * dx * dx + 2.0 * cb[i] * dx * dy + cc[i] * dy * dy
                    a = op[i] * np.exp(-0.5 * q)
                    if a < alpha_min:
                        continue
                    w = a * T
                    acc_d += w * z[i]
                    acc_w += w
                    weights[lab[i]] += w
                    T *= 1.0 - a
                    if T < t_stop:
                        if tol < 0.0:
                            break
                        # the rest of the list carries at most T weight at depth <= z_far
                        spread = z_far - acc_d / acc_w if normalize else z_far
                        if T <= tol and T * spread <= tol * acc_d:
                            break
                if acc_w > 0.0:
                    depth[py, px] = acc_d / acc_w if normalize else acc_d
                    cov[py, px] = acc_w
                    best = 0
                    for c in range(1, n_cls):
                        if weights[c] > weights[best]:
                            best = c
                    sem[py, px] = best


def rasterize(gaussians: GaussianSet, camera, backend: str = "ut", ut: UtParams | None = None,
              tile: int = 16, alpha_min: float = DEFAULT_ALPHA_MIN, normalize_depth: bool = True,
              projected: Projected | None = None, transmittance_stop: float = TRANSMITTANCE_STOP,
              stop_tolerance: float | None = STOP_TOLERANCE) -> RenderedMaps:
    """Render depth, semantic and coverage maps for one camera.

    Per pixel, splats are composited front to back with
    ``alpha' = alpha * exp(-q / 2)``; contributions below ``alpha_min`` are
    skipped and compositing stops once transmittance drops below
    ``transmittance_stop``. With ``stop_tolerance`` set, the stop is further
    delayed until the splats left in the tile list can no longer change the
    depth (relatively) or any class weight by more than that tolerance, which
    keeps the output within 1e-7 of full compositing. ``None`` gives the plain
    threshold stop.
    Each splat is binned to the tiles overlapped by the ellipse on which its
    ``alpha'`` falls to ``alpha_min``, so binning never drops a contribution.
    """
    if int(tile) < 1:
        raise ValueError("tile must be at least 1")
    if not 0.0 < alpha_min < 1.0:
        raise ValueError("alpha_min must lie in (0, 1)")
    tile = int(tile)
    H, W = camera.height, camera.width
    depth = np.zeros((H, W))
    sem = np.zeros((H, W), dtype=np.int64)
    cov = np.zeros((H, W))
    diag = {"gaussians": len(gaussians), "culled": 0, "ill_conditioned": 0, "rendered": 0, "tile_entries": 0}
    if len(gaussians) == 0:
        return RenderedMaps(depth, sem.astype(np.uint8), cov, diag)

    proj = projected if projected is not None else project_gaussians(gaussians, camera, backend, ut, alpha_min)
    valid = proj.valid.copy()
    diag["culled"] = int((~valid).sum())
    det, cond = _conditioning(np.nan_to_num(proj.cov2d))
    bad = valid & ((det <= 0) | ~(cond <= MAX_CONDITION))
    diag["ill_conditioned"] = int(bad.sum())
    valid &= ~bad
    cut = 2.0 * np.log(gaussians.opacities / alpha_min)
    valid &= cut >= 0
    idx = sort_order(proj, gaussians, np.flatnonzero(valid))

    m, c2 = proj.mean2d[idx], proj.cov2d[idx]
    rx = np.sqrt(cut[idx] * c2[:, 0, 0])
    ry = np.sqrt(cut[idx] * c2[:, 1, 1])
    x0 = np.maximum(np.ceil(m[:, 0] - rx), 0)
    x1 = np.minimum(np.floor(m[:, 0] + rx), W - 1)
    y0 = np.maximum(np.ceil(m[:, 1] - ry), 0)
    y1 = np.minimum(np.floor(m[:, 1] + ry), H - 1)
    keep = (x0 <= x1) & (y0 <= y1)
    idx, m, c2 = idx[keep], m[keep], c2[keep]
    x0, x1, y0, y1 = (v[keep].astype(np.int64) for v in (x0, x1, y0, y1))
    diag["rendered"] = int(len(idx))
    if len(idx) == 0:
        return RenderedMaps(depth, sem.astype(np.uint8), cov, diag)

    inv = np.linalg.inv(c2)
    n_tx, n_ty = -(-W // tile), -(-H // tile)
    offsets, items = _bin_tiles(x0, x1, y0, y1, tile, n_tx, n_ty)
    diag["tile_entries"] = int(len(items))
    labels = gaussians.labels[idx]
    n_cls = int(labels.max()) + 1
    _composite_tiles(offsets, items, np.ascontiguousarray(m[:, 0]), np.ascontiguousarray(m[:, 1]),
                     np.ascontiguousarray(inv[:, 0, 0]), np.ascontiguousarray(inv[:, 0, 1]),
                     np.ascontiguousarray(inv[:, 1, 1]), gaussians.opacities[idx], proj.depth[idx],
                     labels, n_cls, W, H, tile, n_tx, float(alpha_min), float(transmittance_stop),
                     -1.0 if stop_tolerance is None else float(stop_tolerance),
                     bool(normalize_depth), depth, sem, cov)
    return RenderedMaps(depth, sem.astype(np.uint8), cov, diag)
