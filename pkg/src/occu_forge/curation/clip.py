"""Scenario clips, BEV maps and the JSON manifest that describes them."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import OrientedBox, PointCloud, RigidTransform
from ..io import read_pgm, read_ply, write_pgm, write_ply

__all__ = ["BevMap", "Frame", "ScenarioClip", "load_manifest", "save_manifest", "ManifestError"]


class ManifestError(OSError):
    """A manifest or one of the files it references could not be read."""


@dataclass(frozen=True, eq=False)
class BevMap:
    """Top-down background labels; ``labels[i, j]`` covers x-cell i, y-cell j."""

    labels: np.ndarray
    cell_size: float
    origin: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2:
            raise ValueError("BEV labels must be 2D")
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64).reshape(2))

    @property
    def dims(self) -> tuple[int, int]:
        return self.labels.shape

    def lookup(self, xy) -> tuple[np.ndarray, np.ndarray]:
        """Labels at world (x, y) positions and a mask of in-extent queries."""
        xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))[:, :2]
        idx = np.floor((xy - self.origin) / self.cell_size).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)
        out = np.zeros(len(xy), dtype=np.uint8)
        out[inside] = self.labels[idx[inside, 0], idx[inside, 1]]
        return out, inside


@dataclass(frozen=True, eq=False)
class Frame:
    timestamp: float
    ego_pose: RigidTransform
    sweep: PointCloud
    boxes: tuple = ()
    sensor_origin: tuple = (0.0, 0.0, 0.0)   # where the sweep was observed from, ego frame

    def __post_init__(self):
        o = np.asarray(self.sensor_origin, dtype=np.float64).reshape(3)
        object.__setattr__(self, "sensor_origin", tuple(float(v) for v in o))

    def viewpoint(self) -> np.ndarray:
        """Sensor origin in the world frame."""
        return self.ego_pose.apply(np.asarray(self.sensor_origin)[None])[0]

    def box(self, track_id: str) -> OrientedBox | None:
        for b in self.boxes:
            if b.track_id == track_id:
                return b
        return None


@dataclass(frozen=True, eq=False)
class ScenarioClip:
    """Ordered LiDAR frames. Sweeps are in the sensor frame, boxes in world frame."""

    frames: tuple
    bev_map: BevMap | None = None

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        ts = np.array([f.timestamp for f in frames])
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("frame timestamps must be strictly increasing")
        for f in frames:
            ids = [b.track_id for b in f.boxes]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate track ids in frame at t={f.timestamp}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def track_ids(self) -> list[str]:
        seen = {}
        for f in self.frames:
            for b in f.boxes:
                seen.setdefault(b.track_id, None)
        return list(seen)


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def load_manifest(path) -> ScenarioClip:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    base = path.parent
    frames = []
    for i, fr in enumerate(doc["frames"]):
        sweep_path = _resolve(base, fr["sweep"])
        try:
            sweep = read_ply(sweep_path)
        except (OSError, ValueError) as exc:
            raise ManifestError(f"frame {i}: cannot read sweep {sweep_path}: {exc}") from exc
        frames.append(Frame(
            float(fr["timestamp"]),
            RigidTransform.from_dict(fr["ego_pose"]),
            sweep,
            tuple(OrientedBox.from_dict(b) for b in fr.get("boxes", [])),
            tuple(fr.get("sensor_origin", (0.0, 0.0, 0.0))),
        ))
    bev = None
    if doc.get("bev_map"):
        entry = doc["bev_map"]
        try:
            labels = read_pgm(_resolve(base, entry["pgm"]))
            georef = json.loads(_resolve(base, entry["georef"]).read_text())
        except (OSError, ValueError) as exc:
            raise ManifestError(f"cannot read BEV map: {exc}") from exc
        bev = BevMap(labels, float(georef["cell_size"]), georef["origin"])
    return ScenarioClip(tuple(frames), bev)


def save_manifest(clip: ScenarioClip, directory, name: str = "manifest.json") -> Path:
    """Write sweeps as binary PLY, the BEV map as PGM + georef JSON, and the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, fr in enumerate(clip.frames):
        sweep = f"sweep_{i:04d}.ply"
        write_ply(directory / sweep, fr.sweep)
        frames.append({
            "timestamp": fr.timestamp,
            "ego_pose": fr.ego_pose.to_dict(),
            "sweep": sweep,
            "boxes": [b.to_dict() for b in fr.boxes],
            "sensor_origin": list(fr.sensor_origin),
        })
    doc = {"frames": frames}
    if clip.bev_map is not None:
        write_pgm(directory / "bev.pgm", clip.bev_map.labels)
        (directory / "bev.json").write_text(json.dumps(
            {"cell_size": clip.bev_map.cell_size, "origin": clip.bev_map.origin.tolist(),
             "layout": "labels[row=x cell, col=y cell]"}, indent=2))
        doc["bev_map"] = {"pgm": "bev.pgm", "georef": "bev.json"}
    out = directory / name
    out.write_text(json.dumps(doc, indent=2))
    return out
