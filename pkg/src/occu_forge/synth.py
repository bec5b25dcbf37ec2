"""Synthetic scenes with analytic geometry, used as test oracles.

Every scene is a set of solid oriented boxes. Voxel-aligned boxes make the
ground-truth grid an exact voxelization, so analytic ray intersections are
directly comparable with simulated returns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curation.clip import BevMap, Frame, ScenarioClip
from .geometry import (CameraModel, LidarRig, LidarSensor, OrientedBox, PointCloud,
                       RigidTransform, rays_world)
from .grid import DEFAULT_CLASS_TABLE, SemanticOccupancyGrid

__all__ = [
    "Scene",
    "SyntheticDataset",
    "ray_box_intersect",
    "ray_cast",
    "scan",
    "rasterize_boxes",
    "wall_scene",
    "box_street_scene",
    "moving_box_scene",
    "icp_scene_points",
    "ring_pattern",
    "SCENES",
]

ROAD = DEFAULT_CLASS_TABLE.id_of("road")
VEHICLE = DEFAULT_CLASS_TABLE.id_of("vehicle")
BARRIER = DEFAULT_CLASS_TABLE.id_of("barrier")
GENERIC = DEFAULT_CLASS_TABLE.id_of("generic-object")


def aabb(lo, hi, class_id: int, track_id: str = "") -> OrientedBox:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return OrientedBox((lo + hi) / 2, np.eye(3), (hi - lo) / 2, class_id, track_id)


def ray_box_intersect(origins: np.ndarray, dirs: np.ndarray, box: OrientedBox) -> np.ndarray:
    """Entry distance of each ray into a solid box (inf on a miss; 0 if starting inside)."""
    o = (origins - box.center) @ box.rotation
    d = dirs @ box.rotation
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-box.half_extents - o) * inv
        t2 = (box.half_extents - o) * inv
    # rays parallel to a slab: inside the slab -> unconstrained, outside -> miss
    par = d == 0
    inside_slab = np.abs(o) <= box.half_extents
    t1 = np.where(par, np.where(inside_slab, -np.inf, np.inf), t1)
    t2 = np.where(par, np.inf, t2)
    tmin = np.max(np.minimum(t1, t2), axis=1)
    tmax = np.min(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmax >= 0)
    return np.where(hit, np.maximum(tmin, 0.0), np.inf)


def ray_cast(origins, dirs, boxes) -> tuple[np.ndarray, np.ndarray]:
    """First-hit distance and box index per ray (inf / -1 on a miss)."""
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    best = np.full(len(dirs), np.inf)
    which = np.full(len(dirs), -1, dtype=np.int64)
    for i, box in enumerate(boxes):
        t = ray_box_intersect(origins, dirs, box)
        closer = t < best
        best[closer] = t[closer]
        which[closer] = i
    return best, which


def scan(boxes, rig: LidarRig, ego_pose: RigidTransform, noise: float = 0.0,
         rng: np.random.Generator | None = None) -> PointCloud:
    """Ray-cast a rig against the boxes; returns hits in the ego frame."""
    rays = rays_world(rig, ego_pose)
    t, which = ray_cast(rays.origins, rays.directions, boxes)
    ok = np.isfinite(t) & (t <= rays.max_range) & (t > 0)
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        t = t + rng.normal(0.0, noise, size=t.shape)
    world = rays.origins[ok] + t[ok, None] * rays.directions[ok]
    labels = np.array([boxes[i].class_id for i in which[ok]], dtype=np.int64)
    return PointCloud(ego_pose.inverse().apply(world), labels=labels)


def _box_surface_samples(box: OrientedBox, spacing: float, skip_bottom: bool) -> np.ndarray:
    he = box.half_extents
    out = []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            if skip_bottom and axis == 2 and sign < 0:
                continue
            a, b = [k for k in range(3) if k != axis]
            ua = np.linspace(-he[a], he[a], max(2, int(np.ceil(2 * he[a] / spacing)) + 1))
            ub = np.linspace(-he[b], he[b], max(2, int(np.ceil(2 * he[b] / spacing)) + 1))
            A, B = np.meshgrid(ua, ub, indexing="ij")
            p = np.zeros((A.size, 3))
            p[:, a], p[:, b], p[:, axis] = A.ravel(), B.ravel(), sign * he[axis]
            out.append(p)
    return box.pose.apply(np.concatenate(out))


def rasterize_boxes(boxes, dims, voxel_size, origin, mode: str = "solid",
                    surface_spacing: float = 0.02) -> SemanticOccupancyGrid:
    """Ground-truth grid from analytic boxes.

    ``mode="solid"`` marks voxels whose centre lies inside a box (later boxes
    win); ``mode="surface"`` marks voxels touched by box faces (bottom faces
    excluded) and labels each one by the box containing its centre.
    """
    grid = SemanticOccupancyGrid.empty(dims, voxel_size, origin)
    classes = np.zeros(grid.dims, dtype=np.uint8)
    if mode == "solid":
        idx = np.stack(np.meshgrid(*[np.arange(d) for d in grid.dims], indexing="ij"), axis=-1).reshape(-1, 3)
        centres = grid.voxel_to_world_center(idx)
        for box in boxes:
            inside = box.contains(centres)
            classes[tuple(idx[inside].T)] = box.class_id
        return grid.with_classes(classes)
    if mode != "surface":
        raise ValueError(f"unknown mode {mode!r}")
    occ = np.zeros(grid.dims, dtype=bool)
    for box in boxes:
        pts = _box_surface_samples(box, surface_spacing, skip_bottom=True)
        idx = grid.world_to_voxel(pts)
        idx = idx[grid.in_bounds(idx)]
        occ[tuple(idx.T)] = True
    idx = np.argwhere(occ)
    centres = grid.voxel_to_world_center(idx)
    labels = np.zeros(len(idx), dtype=np.uint8)
    for box in boxes:
        labels[box.contains(centres)] = box.class_id
    classes[tuple(idx.T)] = labels
    return grid.with_classes(classes)


@dataclass
class Scene:
    """Static solid boxes plus a voxel grid geometry."""

    name: str
    boxes: list
    dims: tuple
    voxel_size: float
    origin: tuple
    rig: LidarRig
    cameras: list = field(default_factory=list)

    def ground_truth(self, mode: str = "solid") -> SemanticOccupancyGrid:
        return rasterize_boxes(self.boxes, self.dims, (self.voxel_size,) * 3, self.origin, mode)

    def analytic_depth(self, origins, dirs) -> np.ndarray:
        return ray_cast(origins, dirs, self.boxes)[0]

    def dataset(self, noise: float = 0.0, seed: int = 0) -> "SyntheticDataset":
        """One-frame clip of this scene seen from the identity ego pose.

        Vehicle and generic-object boxes become tracked objects; everything
        else is background. The BEV map labels every cell as road.
        """
        rng = np.random.default_rng(seed)
        sweep = scan(self.boxes, self.rig, RigidTransform.identity(), noise, rng)
        tracked = tuple(OrientedBox(b.center, b.rotation, b.half_extents, b.class_id, f"object-{i}")
                        for i, b in enumerate(self.boxes) if b.class_id in (VEHICLE, GENERIC))
        mount = self.rig.sensors[0].origin if len(self.rig) else np.zeros(3)
        frame = Frame(0.0, RigidTransform.identity(), PointCloud(sweep.xyz), tracked, tuple(mount))
        extent = np.asarray(self.dims) * self.voxel_size
        cell = 0.5
        n = np.ceil(extent[:2] / cell).astype(int)
        bev = BevMap(np.full((n[0], n[1]), ROAD, dtype=np.uint8), cell, tuple(self.origin[:2]))
        overrides = {"dims": list(self.dims), "voxel_size": self.voxel_size, "origin": list(self.origin)}
        return SyntheticDataset(ScenarioClip((frame,), bev), self.ground_truth(), self.rig, overrides)


@dataclass
class SyntheticDataset:
    """A clip with its analytic ground truth and the grid geometry to curate into."""

    clip: ScenarioClip
    ground_truth: SemanticOccupancyGrid
    rig: LidarRig
    curation_overrides: dict


def _forward_fan(n_az: int, n_el: int, az_deg: float, el_deg: float) -> np.ndarray:
    az = np.deg2rad(np.linspace(-az_deg, az_deg, n_az))
    el = np.deg2rad(np.linspace(-el_deg, el_deg, n_el))
    A, E = np.meshgrid(az, el)
    return np.stack([A.ravel(), E.ravel()], axis=1)


def default_camera(width: int = 160, height: int = 120, pose: RigidTransform | None = None,
                   fov_deg: float = 90.0, **distortion) -> CameraModel:
    """Forward-looking camera (optical axis along ego +x) at 1.5 m height."""
    f = (width / 2) / np.tan(np.deg2rad(fov_deg) / 2)
    if pose is None:
        # camera axes: x right (-y ego), y down (-z ego), z forward (+x ego)
        R_cam_to_ego = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
        pose = RigidTransform(R_cam_to_ego, (0.0, 0.0, 1.5)).inverse()
    return CameraModel(f, f, (width - 1) / 2, (height - 1) / 2, width, height, pose=pose, **distortion)


def wall_scene(distance: float = 20.0, thickness_voxels: int = 1, voxel_size: float = 0.25,
               n_az: int = 256, n_el: int = 256) -> Scene:
    """A single wall facing the sensor, ``distance`` metres ahead along +x."""
    v = voxel_size
    wall = aabb((distance, -10.0, -1.75), (distance + thickness_voxels * v, 10.0, 5.75), GENERIC)
    dims = (int(np.ceil((distance + 12.0) / v)), int(32.0 / v), int(8.0 / v))
    sensor = LidarSensor(RigidTransform(np.eye(3), (0.0, 0.0, 1.5)), _forward_fan(n_az, n_el, 20.0, 8.0),
                         max_range=distance + 10.0, name="front")
    return Scene("wall", [wall], dims, v, (0.0, -16.0, -2.0), LidarRig((sensor,)), [default_camera()])


def box_street_scene(voxel_size: float = 0.25, n_az: int = 1024, n_el: int = 64) -> Scene:
    """A road between two building rows with parked and driving vehicles."""
    v = voxel_size
    half = 20.0
    boxes = [
        aabb((-half, -half, -v), (half, half, 0.0), ROAD),
        aabb((-half, 10.0, 0.0), (half, 11.0, 6.0), BARRIER),
        aabb((-half, -11.0, 0.0), (half, -10.0, 6.0), BARRIER),
        aabb((6.0, -3.0, 0.0), (10.5, -1.0, 1.5), VEHICLE),
        aabb((-12.0, 2.0, 0.0), (-7.5, 4.0, 1.75), VEHICLE),
        aabb((3.0, 6.0, 0.0), (5.0, 8.0, 1.0), GENERIC),
        aabb((-4.0, -8.0, 0.0), (-2.0, -6.5, 2.5), GENERIC),
    ]
    dims = (int(2 * half / v), int(2 * half / v), int(8.0 / v))
    pattern = LidarSensor.grid_pattern(np.linspace(-25.0, 5.0, n_el), n_az)
    sensor = LidarSensor(RigidTransform(np.eye(3), (0.0, 0.0, 1.8)), pattern, max_range=60.0, name="top")
    return Scene("box-street", boxes, dims, v, (-half, -half, -6 * v), LidarRig((sensor,)),
                 [default_camera()])


def ring_pattern(height: float, r_min: float, r_max: float, spacing: float,
                 roof_elevations_deg=()) -> np.ndarray:
    """Scan pattern whose ground footprint is a lattice of ``spacing`` metres.

    Rings hit flat ground ``height`` below the sensor at radii ``r_min``,
    ``r_min + spacing``, ... ``r_max``, each with about ``2 pi r / spacing``
    azimuths, so the ground point density does not fall off with range.
    Extra rows at ``roof_elevations_deg`` use the azimuth count of the last ring.
    """
    radii = np.arange(r_min, r_max + spacing / 2, spacing)
    rows = [(-np.arctan2(height, r), int(np.ceil(2 * np.pi * r / spacing))) for r in radii]
    rows += [(np.deg2rad(e), rows[-1][1]) for e in roof_elevations_deg]
    out = []
    for el, n in rows:
        az = -np.pi + 2 * np.pi * np.arange(n) / n
        out.append(np.column_stack([az, np.full(n, el)]))
    return np.concatenate(out)


def moving_box_scene(n_frames: int = 5, dt: float = 0.5, voxel_size: float = 0.25,
                     ring_spacing: float = 0.1, noise: float = 0.0, seed: int = 0) -> SyntheticDataset:
    """Static ego, flat road and one vehicle that drifts along +x while yawing.

    The vehicle rotates a quarter turn per frame so every side is observed.
    At the middle frame its faces lie on voxel centres, and the ground plane
    z = 0 bisects a voxel layer, so the surface ground truth is unambiguous.
    """
    v = voxel_size
    half = 10.0
    ground_half = 12.0
    ground = aabb((-ground_half, -ground_half, -3.0), (ground_half, ground_half, 0.0), ROAD)
    mount = np.array([0.0, 0.0, 2.0])
    # ground rings out to the slab corners, then shallow rows for the vehicle roof
    pattern = ring_pattern(mount[2], 1.0, ground_half * np.sqrt(2.0), ring_spacing,
                           np.arange(-6.5, -1.9, 0.25))
    sensor = LidarSensor(RigidTransform(np.eye(3), mount), pattern, max_range=40.0, name="top")
    rig = LidarRig((sensor,))
    he = np.array([2.0, 1.0, 0.7])
    mid = n_frames // 2
    speed = 1.0
    yaw_rate = (np.pi / 2) / dt
    rng = np.random.default_rng(seed)
    frames, ref_box = [], None
    for k in range(n_frames):
        t = k * dt
        centre = np.array([(k - mid) * dt * speed, 5.0, 0.1 + he[2]])
        yaw = (k - mid) * dt * yaw_rate
        box = OrientedBox(centre, RigidTransform.from_yaw(yaw).rotation, he, VEHICLE, "vehicle-0")
        if k == mid:
            ref_box = box
        sweep = scan([ground, box], rig, RigidTransform.identity(), noise, rng)
        frames.append(Frame(t, RigidTransform.identity(), PointCloud(sweep.xyz), (box,), tuple(mount)))
    bev_cell = 0.5
    n_bev = int(2 * ground_half / bev_cell)
    bev = BevMap(np.full((n_bev, n_bev), ROAD, dtype=np.uint8), bev_cell, (-ground_half, -ground_half))
    clip = ScenarioClip(tuple(frames), bev)

    dims = (int(2 * half / v), int(2 * half / v), int(4.0 / v))
    origin = (-half - v / 2, -half - v / 2, -2.0 - v / 2)
    # ground: the plane z = 0 over the whole grid
    surface_ground = aabb((-half - v, -half - v, -3.0), (half + v, half + v, 0.0), ROAD)
    gt = rasterize_boxes([surface_ground], dims, (v,) * 3, origin, "surface")
    gt_classes = np.array(gt.classes)
    # keep only the top face of the ground slab
    top_layer = int(np.floor((0.0 - origin[2]) / v))
    gt_classes[:, :, :top_layer] = 0
    veh = rasterize_boxes([ref_box], dims, (v,) * 3, origin, "surface")
    mask = veh.classes > 0
    gt_classes[mask] = veh.classes[mask]
    gt = gt.with_classes(gt_classes)
    overrides = {"dims": list(dims), "voxel_size": v, "origin": list(origin)}
    return SyntheticDataset(clip, gt, rig, overrides)


def icp_scene_points(rng: np.random.Generator, n_points: int = 20000, extent: float = 15.0,
                     layout_seed: int | None = None) -> np.ndarray:
    """Points on a ground plane, two walls and a few randomly placed boxes.

    The box layout comes from ``layout_seed`` (default: drawn from ``rng``), so
    two calls with the same layout seed sample the same surfaces.
    """
    layout = np.random.default_rng(int(rng.integers(2**63)) if layout_seed is None else layout_seed)
    n_boxes = 6
    boxes = []
    for _ in range(n_boxes):
        c = np.array([layout.uniform(-12, 12), layout.uniform(-6, 7), 0.0])
        size = layout.uniform(0.8, 3.0, 3)
        boxes.append(OrientedBox(c + [0, 0, size[2] / 2],
                                 RigidTransform.from_yaw(layout.uniform(0, np.pi)).rotation, size / 2))
    n_g = n_points // 3
    pts = [np.column_stack([rng.uniform(-extent, extent, (n_g, 2)), np.zeros(n_g)])]
    for y in (-8.0, 9.0):
        n_w = n_points // 6
        pts.append(np.column_stack([rng.uniform(-extent, extent, n_w), np.full(n_w, y), rng.uniform(0, 5, n_w)]))
    n_left = n_points - sum(len(p) for p in pts)
    for i, box in enumerate(boxes):
        m = n_left // n_boxes + (1 if i < n_left % n_boxes else 0)
        face = rng.integers(0, 5, m)
        u = rng.uniform(-1, 1, (m, 3))
        axis = np.array([0, 0, 1, 1, 2])[face]
        sign = np.array([-1, 1, -1, 1, 1])[face]
        u[np.arange(m), axis] = sign
        pts.append(box.pose.apply(u * box.half_extents))
    return np.concatenate(pts)


SCENES = {"wall": wall_scene, "box-street": box_street_scene, "moving-box": moving_box_scene}
