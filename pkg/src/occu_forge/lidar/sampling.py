"""Occupancy-prior sampling along rays.

Uniform samples on [near, max_range] read the occupancy indicator from the
grid; the prior density is 1 inside occupied voxels and 0 elsewhere, and
``n_resample`` depths are drawn from it by stratified inverse-CDF sampling.
The support of the prior is found exactly by voxel traversal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..grid import SemanticOccupancyGrid

__all__ = ["RaySamples", "sample_prior", "ray_seeds", "NEAR"]

NEAR = 0.5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@numba.njit(cache=True, inline="always")
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def unit_float(x):
    """Top 53 bits of a 64-bit hash as a float in [0, 1)."""
    return np.float64(x >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _ray_seeds(global_seed, sensor_ids, ray_ids, out):
    base = splitmix64(np.uint64(global_seed))
    for i in range(len(out)):
        out[i] = splitmix64(splitmix64(base ^ np.uint64(sensor_ids[i])) ^ np.uint64(ray_ids[i]))


def ray_seeds(global_seed: int, sensor_ids, ray_ids) -> np.ndarray:
    """Per-ray hash of (seed, sensor, ray); independent of which other rays are simulated."""
    sensor_ids = np.ascontiguousarray(sensor_ids, dtype=np.int64)
    ray_ids = np.ascontiguousarray(ray_ids, dtype=np.int64)
    out = np.empty(len(ray_ids), dtype=np.uint64)
    _ray_seeds(np.uint64(int(global_seed) & 0xFFFFFFFFFFFFFFFF), sensor_ids, ray_ids, out)
    return out


@numba.njit(cache=True)
def uniform_occupancy(ox, oy, oz, dx, dy, dz, s, occ, gorigin, vox, out):
    nx, ny, nz = occ.shape
    for k in range(len(s)):
        ix = int(np.floor((ox + s[k] * dx - gorigin[0]) / vox[0]))
        iy = int(np.floor((oy + s[k] * dy - gorigin[1]) / vox[1]))
        iz = int(np.floor((oz + s[k] * dz - gorigin[2]) / vox[2]))
        if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz and occ[ix, iy, iz]:
            out[k] = 1.0
        else:
            out[k] = 0.0


@numba.njit(cache=True)
def occupied_intervals(o, d, t0, t1, occ, gorigin, vox, lo, hi):
    """Merged [enter, exit] distances of the ray through occupied voxels within [t0, t1].

    Writes into ``lo``/``hi`` and returns the number of intervals.
    """
    n = occ.shape
    ta, tb = t0, t1
    for a in range(3):
        lo_a = gorigin[a]
        hi_a = gorigin[a] + n[a] * vox[a]
        if d[a] == 0.0:
            if o[a] < lo_a or o[a] >= hi_a:
                return 0
        else:
            u = (lo_a - o[a]) / d[a]
            w = (hi_a - o[a]) / d[a]
            if u > w:
                u, w = w, u
            ta = max(ta, u)
            tb = min(tb, w)
    if ta >= tb:
        return 0
    idx = np.empty(3, dtype=np.int64)
    step = np.empty(3, dtype=np.int64)
    tmax = np.empty(3)
    tdelta = np.empty(3)
    tm = ta + 0.5 * min(tb - ta, 1e-6)
    for a in range(3):
        c = int(np.floor((o[a] + tm * d[a] - gorigin[a]) / vox[a]))
        idx[a] = min(max(c, 0), n[a] - 1)
        if d[a] > 0.0:
            step[a] = 1
            tmax[a] = (gorigin[a] + (idx[a] + 1) * vox[a] - o[a]) / d[a]
            tdelta[a] = vox[a] / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tmax[a] = (gorigin[a] + idx[a] * vox[a] - o[a]) / d[a]
            tdelta[a] = -vox[a] / d[a]
        else:
            step[a] = 0
            tmax[a] = np.inf
            tdelta[a] = np.inf
    count = 0
    t = ta
    while t < tb:
        a = 0
        if tmax[1] < tmax[a]:
            a = 1
        if tmax[2] < tmax[a]:
            a = 2
        t_next = min(tmax[a], tb)
        if occ[idx[0], idx[1], idx[2]] and t_next > t:
            if count > 0 and hi[count - 1] >= t:
                hi[count - 1] = t_next
            else:
                lo[count] = t
                hi[count] = t_next
                count += 1
        t = t_next
        idx[a] += step[a]
        if idx[a] < 0 or idx[a] >= n[a]:
            break
        tmax[a] += tdelta[a]
    return count


@numba.njit(cache=True)
def stratified_resample(lo, hi, count, n_res, seed, out):
    """Stratified inverse-CDF draws from the uniform density on the intervals."""
    total = 0.0
    for k in range(count):
        total += hi[k] - lo[k]
    if total <= 0.0:
        return 0
    k = 0
    cum = 0.0
    for j in range(n_res):
        xi = unit_float(splitmix64(seed ^ np.uint64(j)))
        u = (j + xi) / n_res * total
        while k < count - 1 and u > cum + (hi[k] - lo[k]):
            cum += hi[k] - lo[k]
            k += 1
        s = lo[k] + (u - cum)
        if s > hi[k]:
            s = hi[k]
        if j > 0 and s < out[j - 1]:
            s = out[j - 1]
        out[j] = s
    return n_res


@dataclass
class RaySamples:
    origin: np.ndarray
    direction: np.ndarray
    s: np.ndarray            # uniform sample depths
    occ_prob: np.ndarray     # occupancy indicator at each uniform sample
    resampled: np.ndarray    # depths drawn from the prior
    dropped_by_prior: bool

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.resampled[:, None] * self.direction


def uniform_depths(max_range: float, n_uniform: int) -> np.ndarray:
    return np.linspace(NEAR, max_range, n_uniform)


def sample_prior(origin, direction, grid: SemanticOccupancyGrid, max_range: float = 80.0,
                 n_uniform: int = 1024, n_resample: int = 64, rng_seed: int = 0,
                 sensor_id: int = 0, ray_id: int = 0) -> RaySamples:
    """Uniform occupancy probe plus prior-guided resampling for one ray."""
    if n_uniform < 2:
        raise ValueError("n_uniform must be at least 2")
    if n_resample < 1:
        raise ValueError("n_resample must be at least 1")
    if max_range <= NEAR:
        raise ValueError(f"max_range must exceed {NEAR} m")
    o = np.asarray(origin, dtype=np.float64).reshape(3)
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    d = d / np.linalg.norm(d)
    occ = np.ascontiguousarray(grid.occupied)
    gorigin = np.asarray(grid.origin, dtype=np.float64)
    vox = np.asarray(grid.voxel_size, dtype=np.float64)
    s = uniform_depths(max_range, n_uniform)
    occ_prob = np.empty(n_uniform)
    uniform_occupancy(o[0], o[1], o[2], d[0], d[1], d[2], s, occ, gorigin, vox, occ_prob)
    seed = ray_seeds(rng_seed, [sensor_id], [ray_id])[0]
    resampled = np.empty(0)
    if occ_prob.any():
        cap = sum(grid.dims) + 4
        lo, hi = np.empty(cap), np.empty(cap)
        count = occupied_intervals(o, d, NEAR, float(max_range), occ, gorigin, vox, lo, hi)
        buf = np.empty(n_resample)
        got = stratified_resample(lo, hi, count, n_resample, seed, buf)
        resampled = buf[:got]
    return RaySamples(o, d, s, occ_prob, resampled, dropped_by_prior=len(resampled) == 0)
