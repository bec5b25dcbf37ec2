"""Foreground/background separation and multi-frame aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import OrientedBox, PointCloud, RigidTransform, transform_points
from .clip import ScenarioClip
from .filters import statistical_filter
from .icp import IcpParams, RegistrationError, icp_register

__all__ = [
    "SeparatedFrame",
    "separate",
    "world_sweep",
    "BackgroundParams",
    "Aggregate",
    "aggregate_background",
    "aggregate_object",
]


@dataclass(frozen=True, eq=False)
class SeparatedFrame:
    background: PointCloud
    per_object: dict


def assign_boxes(xyz: np.ndarray, boxes) -> np.ndarray:
    """Index of the owning box per point (-1 for none); overlaps go to the nearest centre."""
    owner = np.full(len(xyz), -1, dtype=np.int64)
    best = np.full(len(xyz), np.inf)
    for i, box in enumerate(boxes):
        inside = box.contains(xyz) if len(xyz) else np.zeros(0, dtype=bool)
        d = np.linalg.norm(xyz - box.center, axis=1)
        take = inside & (d < best)
        owner[take] = i
        best[take] = d[take]
    return owner


def separate(points: PointCloud, boxes) -> SeparatedFrame:
    """Partition ``points`` into background and per-track foreground clouds."""
    boxes = list(boxes)
    owner = assign_boxes(points.xyz, boxes)
    per_object = {b.track_id: points.subset(owner == i) for i, b in enumerate(boxes)}
    return SeparatedFrame(points.subset(owner < 0), per_object)


def world_sweep(frame) -> PointCloud:
    return transform_points(frame.sweep, frame.ego_pose)


@dataclass(frozen=True)
class BackgroundParams:
    k_neighbors: int = 20
    k: float = 2.0
    filter_mode: str = "knn"
    icp: IcpParams = field(default_factory=IcpParams)
    refine: bool = True


@dataclass(frozen=True, eq=False)
class Aggregate:
    """Aggregated points plus the sensor origin each point was seen from."""

    points: PointCloud
    origins: np.ndarray
    corrections: tuple = ()
    per_frame_counts: tuple = ()


def aggregate_background(clip: ScenarioClip, params: BackgroundParams | None = None) -> Aggregate:
    """Filter each frame's background, move it to world, refine consecutive frames with ICP."""
    params = params or BackgroundParams()
    if len(clip) == 0:
        raise ValueError("clip has no frames")
    clouds, origins, corrections, counts = [], [], [], []
    previous = None
    for i, frame in enumerate(clip.frames):
        world = world_sweep(frame)
        bg = separate(world, frame.boxes).background
        # both filter modes are rigid-invariant, so filtering in world equals filtering the raw sweep
        bg = statistical_filter(bg, params.k_neighbors, params.k, params.filter_mode)
        correction = RigidTransform.identity()
        if params.refine and previous is not None and len(bg) >= 10 and len(previous) >= 10:
            try:
                correction = icp_register(bg, previous, params=params.icp).transform
            except (RegistrationError, ValueError) as exc:
                raise RegistrationError(f"frame {i}: {exc}") from exc
            bg = transform_points(bg, correction)
        origin = correction.apply(frame.viewpoint()[None])[0]
        clouds.append(bg)
        origins.append(np.broadcast_to(origin, (len(bg), 3)))
        corrections.append(correction)
        counts.append(len(bg))
        if len(bg):
            previous = bg
    return Aggregate(PointCloud.concatenate(clouds), np.concatenate(origins).reshape(-1, 3),
                     tuple(corrections), tuple(counts))


def aggregate_object(clip: ScenarioClip, track_id: str) -> Aggregate:
    """Stack a track's points from every frame in its box-local frame."""
    clouds, origins, counts = [], [], []
    found = False
    for frame in clip.frames:
        box = frame.box(track_id)
        if box is None:
            continue
        found = True
        world = world_sweep(frame)
        obj = separate(world, frame.boxes).per_object[track_id]
        local = obj.with_xyz(box.to_local(obj.xyz))
        clouds.append(local)
        origins.append(np.broadcast_to(box.to_local(frame.viewpoint()[None])[0], (len(local), 3)))
        counts.append(len(local))
    if not found:
        raise KeyError(f"unknown track id {track_id!r}")
    return Aggregate(PointCloud.concatenate(clouds), np.concatenate(origins).reshape(-1, 3),
                     per_frame_counts=tuple(counts))


def box_at(clip: ScenarioClip, track_id: str, frame_index: int) -> OrientedBox:
    """The track's box at ``frame_index``, or at the nearest frame in time that has it."""
    ref_t = clip.frames[frame_index].timestamp
    best, best_dt = None, np.inf
    for frame in clip.frames:
        box = frame.box(track_id)
        if box is not None and abs(frame.timestamp - ref_t) < best_dt:
            best, best_dt = box, abs(frame.timestamp - ref_t)
    if best is None:
        raise KeyError(f"unknown track id {track_id!r}")
    return best
