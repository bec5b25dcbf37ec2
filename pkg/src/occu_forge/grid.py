"""Dense semantic occupancy grids, voxelization, distance fields and IoU."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import PointCloud

__all__ = [
    "ClassInfo",
    "ClassTable",
    "DEFAULT_CLASS_TABLE",
    "SemanticOccupancyGrid",
    "voxelize",
    "unsigned_distance_field",
    "signed_distance_grid",
    "iou_miou",
    "save_occg",
    "load_occg",
]

OCCG_MAGIC = b"OCCG"
OCCG_VERSION = 1
LAYOUT_X_FASTEST = 0
_HEADER = struct.Struct("<4sIIII3f3fB3x")


@dataclass(frozen=True)
class ClassInfo:
    id: int
    name: str
    color: tuple
    reflectivity: float


class ClassTable:
    """Ordered class list; id 0 is always ``empty``."""

    def __init__(self, classes):
        classes = [c if isinstance(c, ClassInfo) else ClassInfo(int(c["id"]), str(c["name"]),
                                                                tuple(int(x) for x in c["color"]),
                                                                float(c["reflectivity"]))
                   for c in classes]
        if [c.id for c in classes] != list(range(len(classes))):
            raise ValueError("class ids must be contiguous from 0")
        if not classes or classes[0].name != "empty" or classes[0].reflectivity != 0:
            raise ValueError("class 0 must be 'empty' with reflectivity 0")
        for c in classes:
            if not 0.0 <= c.reflectivity <= 1.0:
                raise ValueError(f"reflectivity of {c.name!r} outside [0, 1]")
        self.classes = tuple(classes)
        self._by_name = {c.name: c.id for c in classes}

    def __len__(self) -> int:
        return len(self.classes)

    def __getitem__(self, i: int) -> ClassInfo:
        return self.classes[i]

    def id_of(self, name: str) -> int:
        return self._by_name[name]

    @property
    def palette(self) -> np.ndarray:
        return np.array([c.color for c in self.classes], dtype=np.uint8)

    @property
    def reflectivity(self) -> np.ndarray:
        return np.array([c.reflectivity for c in self.classes])

    def to_dict(self) -> dict:
        return {"classes": [{"id": c.id, "name": c.name, "color": list(c.color),
                             "reflectivity": c.reflectivity} for c in self.classes]}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassTable":
        return cls(d["classes"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ClassTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


# Common driving-scene classes plus "empty"; reflectivities are nominal.
DEFAULT_CLASS_TABLE = ClassTable([
    ClassInfo(0, "empty", (0, 0, 0), 0.0),
    ClassInfo(1, "other-ground", (175, 0, 75), 0.25),
    ClassInfo(2, "vehicle", (100, 150, 245), 0.6),
    ClassInfo(3, "bicycle", (100, 230, 245), 0.5),
    ClassInfo(4, "pedestrian", (255, 30, 30), 0.35),
    ClassInfo(5, "traffic-cone", (255, 120, 50), 0.8),
    ClassInfo(6, "barrier", (255, 200, 0), 0.55),
    ClassInfo(7, "construction-zones", (150, 240, 80), 0.45),
    ClassInfo(8, "generic-object", (255, 255, 255), 0.4),
    ClassInfo(9, "road", (255, 0, 255), 0.2),
    ClassInfo(10, "road-line", (255, 255, 100), 0.7),
])


def _f32(v) -> np.ndarray:
    # origin and voxel size are stored as f32 on disk; keep them f32-exact in memory
    return np.asarray(v, dtype=np.float32).astype(np.float64).reshape(3)


class SemanticOccupancyGrid:
    """Dense H x W x D class-id grid indexed ``classes[x, y, z]``.

    ``origin`` is the world position of the min corner of voxel (0, 0, 0).
    Class 0 means empty.
    """

    def __init__(self, classes, voxel_size=(0.25, 0.25, 0.25), origin=(0.0, 0.0, 0.0)):
        classes = np.asarray(classes)
        if classes.ndim != 3 or min(classes.shape) < 1:
            raise ValueError(f"classes must be a non-empty 3D array, got shape {classes.shape}")
        if classes.min(initial=0) < 0 or classes.max(initial=0) > 255:
            raise ValueError("class ids must fit in a byte")
        self.classes = classes.astype(np.uint8)
        self.classes.setflags(write=False)
        self.voxel_size = _f32(np.broadcast_to(np.asarray(voxel_size, dtype=np.float64), (3,)))
        if np.any(self.voxel_size <= 0):
            raise ValueError("voxel_size components must be positive")
        self.origin = _f32(origin)

    @classmethod
    def empty(cls, dims, voxel_size=(0.25, 0.25, 0.25), origin=(0.0, 0.0, 0.0)) -> "SemanticOccupancyGrid":
        return cls(np.zeros(tuple(int(d) for d in dims), dtype=np.uint8), voxel_size, origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.classes.shape)

    @property
    def occupied(self) -> np.ndarray:
        return self.classes > 0

    @property
    def extent(self) -> np.ndarray:
        return self.voxel_size * np.array(self.dims)

    def voxel_to_world_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size

    def world_to_voxel(self, points) -> np.ndarray:
        return np.floor((np.asarray(points, dtype=np.float64) - self.origin) / self.voxel_size).astype(np.int64)

    def in_bounds(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)

    def lookup(self, points) -> np.ndarray:
        """Class id at each world point (0 outside the grid)."""
        idx = self.world_to_voxel(np.atleast_2d(points))
        ok = self.in_bounds(idx)
        out = np.zeros(len(idx), dtype=np.uint8)
        out[ok] = self.classes[idx[ok, 0], idx[ok, 1], idx[ok, 2]]
        return out

    def occupied_indices(self) -> np.ndarray:
        """(N, 3) indices of non-empty voxels in file (x-fastest) order."""
        lin = np.flatnonzero(self.classes.ravel(order="F"))
        return np.stack(np.unravel_index(lin, self.dims, order="F"), axis=1)

    def with_classes(self, classes) -> "SemanticOccupancyGrid":
        return SemanticOccupancyGrid(classes, self.voxel_size, self.origin)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SemanticOccupancyGrid):
            return NotImplemented
        return (self.dims == other.dims and np.array_equal(self.voxel_size, other.voxel_size)
                and np.array_equal(self.origin, other.origin)
                and np.array_equal(self.classes, other.classes))

    def __repr__(self) -> str:
        return (f"SemanticOccupancyGrid(dims={self.dims}, voxel_size={self.voxel_size.tolist()}, "
                f"origin={self.origin.tolist()}, occupied={int(self.occupied.sum())})")

    def save(self, path) -> None:
        save_occg(self, path)

    @classmethod
    def load(cls, path) -> "SemanticOccupancyGrid":
        return load_occg(path)


def voxelize(points: PointCloud, dims, voxel_size, origin) -> tuple[SemanticOccupancyGrid, int]:
    """Majority-label voxelization.

    Points without labels count as class 1 (binary occupancy). Ties between
    labels go to the smaller class id. Returns the grid and the number of
    points that fell outside it.
    """
    grid = SemanticOccupancyGrid.empty(dims, voxel_size, origin)
    if len(points) == 0:
        return grid, 0
    labels = points.labels if points.labels is not None else np.ones(len(points), dtype=np.int64)
    if np.any(labels < 1) or np.any(labels > 255):
        raise ValueError("point labels must be class ids in [1, 255]")
    idx = grid.world_to_voxel(points.xyz)
    ok = grid.in_bounds(idx)
    n_out = int(np.count_nonzero(~ok))
    idx, labels = idx[ok], labels[ok]
    if len(idx) == 0:
        return grid, n_out
    H, W, _ = grid.dims
    lin = idx[:, 0] + H * (idx[:, 1] + W * idx[:, 2])
    pairs, counts = np.unique(np.stack([lin, labels], axis=1), axis=0, return_counts=True)
    # per voxel: highest count first, then smallest label
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    pairs = pairs[order]
    first = np.ones(len(pairs), dtype=bool)
    first[1:] = pairs[1:, 0] != pairs[:-1, 0]
    flat = np.zeros(grid.classes.size, dtype=np.uint8)
    flat[pairs[first, 0]] = pairs[first, 1]
    return grid.with_classes(flat.reshape(grid.dims, order="F")), n_out


def unsigned_distance_field(grid: SemanticOccupancyGrid) -> np.ndarray:
    """Exact Euclidean distance (m) from each voxel centre to the nearest occupied centre."""
    occ = grid.occupied
    if not occ.any():
        raise ValueError("no occupied voxels")
    return ndimage.distance_transform_edt(~occ, sampling=grid.voxel_size)


def signed_distance_grid(grid: SemanticOccupancyGrid) -> np.ndarray:
    """Signed distance at voxel centres: positive outside, negative inside.

    Inside values are the distance to the nearest empty voxel centre. A fully
    occupied grid has no empty voxel; its interior is then bounded by the grid
    diagonal.
    """
    occ = grid.occupied
    outside = unsigned_distance_field(grid)
    if occ.all():
        inside = np.full(occ.shape, float(np.linalg.norm(grid.extent)))
    else:
        inside = ndimage.distance_transform_edt(occ, sampling=grid.voxel_size)
    return np.where(occ, -inside, outside)


def iou_miou(pred: SemanticOccupancyGrid, gt: SemanticOccupancyGrid) -> dict:
    if pred.dims != gt.dims:
        raise ValueError(f"grid dims differ: {pred.dims} vs {gt.dims}")
    p, g = pred.classes.ravel(), gt.classes.ravel()
    po, go = p > 0, g > 0
    union = np.count_nonzero(po | go)
    iou = np.count_nonzero(po & go) / union if union else 1.0
    n = int(max(p.max(initial=0), g.max(initial=0))) + 1
    inter = np.bincount(p[p == g], minlength=n)
    pc, gc = np.bincount(p, minlength=n), np.bincount(g, minlength=n)
    per_class = {}
    for c in range(1, n):
        u = pc[c] + gc[c] - inter[c]
        if u:
            per_class[c] = inter[c] / u
    present = [c for c in range(1, n) if gc[c] > 0]
    miou = float(np.mean([per_class[c] for c in present])) if present else float("nan")
    return {"iou_occupied": float(iou), "per_class_iou": per_class, "miou": miou}


def save_occg(grid: SemanticOccupancyGrid, path) -> None:
    H, W, D = grid.dims
    header = _HEADER.pack(OCCG_MAGIC, OCCG_VERSION, H, W, D,
                          *grid.voxel_size.astype(np.float32), *grid.origin.astype(np.float32),
                          LAYOUT_X_FASTEST)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.classes.ravel(order="F").tobytes())


def load_occg(path) -> SemanticOccupancyGrid:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated OCCG header")
    magic, version, H, W, D, *rest = _HEADER.unpack_from(data)
    if magic != OCCG_MAGIC:
        raise ValueError(f"{path}: not an OCCG file")
    if version != OCCG_VERSION:
        raise ValueError(f"{path}: unsupported OCCG version {version}")
    voxel_size, origin, layout = rest[:3], rest[3:6], rest[6]
    if layout != LAYOUT_X_FASTEST:
        raise ValueError(f"{path}: unknown layout tag {layout}")
    payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if payload.size != H * W * D:
        raise ValueError(f"{path}: payload has {payload.size} bytes, expected {H * W * D}")
    return SemanticOccupancyGrid(payload.reshape((H, W, D), order="F"), voxel_size, origin)
