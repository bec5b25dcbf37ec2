"""Rigid transforms, oriented boxes, camera and LiDAR rig models."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

__all__ = [
    "PointCloud",
    "RigidTransform",
    "OrientedBox",
    "CameraModel",
    "AffineCamera",
    "LidarSensor",
    "LidarRig",
    "Rays",
    "transform_points",
    "to_box_frame",
    "project",
    "rays_world",
    "direction_from_angles",
]

_ORTHO_TOL = 1e-6


def _as_vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {np.shape(v)}")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Unordered 3D points with optional per-point attributes.

    ``attrs`` holds extra per-point columns (e.g. ``drop_prob``, ``sensor_id``)
    that are carried through geometric operations unchanged.
    """

    xyz: np.ndarray
    intensity: np.ndarray | None = None
    labels: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (N, 3), got {xyz.shape}")
        object.__setattr__(self, "xyz", xyz)
        n = len(xyz)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if len(inten) != n:
                raise ValueError("intensity length does not match point count")
            object.__setattr__(self, "intensity", inten)
        if self.labels is not None:
            lab = np.asarray(self.labels).reshape(-1).astype(np.int64)
            if len(lab) != n:
                raise ValueError("labels length does not match point count")
            object.__setattr__(self, "labels", lab)
        attrs = {}
        for key, val in self.attrs.items():
            val = np.asarray(val)
            if len(val) != n:
                raise ValueError(f"attribute {key!r} length does not match point count")
            attrs[key] = val
        object.__setattr__(self, "attrs", attrs)

    def __len__(self) -> int:
        return len(self.xyz)

    def subset(self, index) -> "PointCloud":
        return PointCloud(
            self.xyz[index],
            None if self.intensity is None else self.intensity[index],
            None if self.labels is None else self.labels[index],
            {k: v[index] for k, v in self.attrs.items()},
        )

    def with_xyz(self, xyz: np.ndarray) -> "PointCloud":
        return replace(self, xyz=xyz)

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return PointCloud(np.zeros((0, 3)))
        xyz = np.concatenate([c.xyz for c in clouds])
        inten = labels = None
        if all(c.intensity is not None for c in clouds):
            inten = np.concatenate([c.intensity for c in clouds])
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        keys = set.intersection(*(set(c.attrs) for c in clouds))
        attrs = {k: np.concatenate([c.attrs[k] for c in clouds]) for k in sorted(keys)}
        return PointCloud(xyz, inten, labels, attrs)


def _nearest_rotation(R: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(R)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``p -> R p + t``.

    ``a @ b`` composes so that ``b`` is applied first.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not np.allclose(R @ R.T, np.eye(3), atol=_ORTHO_TOL) or np.linalg.det(R) < 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        # snap small drift so R R^T = I holds to machine precision
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-12, rtol=0):
            R = _nearest_rotation(R)
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(_as_vec3(self.translation, "translation").copy()))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_quaternion(cls, quaternion, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Build from a (w, x, y, z) quaternion; it is normalized first."""
        q = np.asarray(quaternion, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ValueError("zero quaternion")
        w, x, y, z = q / norm
        return cls(Rotation.from_quat([x, y, z, w]).as_matrix(), translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(Rotation.from_rotvec(_as_vec3(rotvec, "rotvec")).as_matrix(), translation)

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        c, s = np.cos(yaw), np.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_quaternion(self) -> np.ndarray:
        """(w, x, y, z) with w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        q = np.array([w, x, y, z])
        return -q if w < 0 else q

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians."""
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))

    def to_dict(self) -> dict:
        return {"quaternion": self.as_quaternion().tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls.from_quaternion(d.get("quaternion", (1, 0, 0, 0)), d.get("translation", (0, 0, 0)))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    rotation: np.ndarray
    half_extents: np.ndarray
    class_id: int = 0
    track_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", _freeze(_as_vec3(self.center, "center").copy()))
        R = RigidTransform(self.rotation).rotation
        object.__setattr__(self, "rotation", R)
        he = _as_vec3(self.half_extents, "half_extents").copy()
        if np.any(he <= 0):
            raise ValueError("half_extents must be strictly positive")
        object.__setattr__(self, "half_extents", _freeze(he))
        object.__setattr__(self, "track_id", str(self.track_id))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def pose(self) -> RigidTransform:
        """Box-local to world transform."""
        return RigidTransform(self.rotation, self.center)

    def to_local(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation

    def contains(self, points, eps: float = 1e-9) -> np.ndarray:
        """Inclusive containment test; accepts a single point or (N, 3)."""
        local = self.to_local(np.atleast_2d(points))
        inside = np.all(np.abs(local) <= self.half_extents + eps, axis=1)
        return inside if np.ndim(points) > 1 else bool(inside[0])

    def transformed(self, T: RigidTransform) -> "OrientedBox":
        return OrientedBox(T.apply(self.center), T.rotation @ self.rotation, self.half_extents,
                           self.class_id, self.track_id)

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "quaternion": RigidTransform(self.rotation).as_quaternion().tolist(),
            "half_extents": self.half_extents.tolist(),
            "class": self.class_id,
            "track_id": self.track_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrientedBox":
        R = RigidTransform.from_quaternion(d.get("quaternion", (1, 0, 0, 0))).rotation
        return cls(d["center"], R, d["half_extents"], int(d.get("class", 0)), str(d.get("track_id", "")))


def transform_points(points: PointCloud, T: RigidTransform) -> PointCloud:
    return points.with_xyz(T.apply(points.xyz))


def to_box_frame(points: PointCloud, box: OrientedBox) -> PointCloud:
    return points.with_xyz(box.to_local(points.xyz))


# -- cameras -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with Brown-Conrady distortion (OpenCV conventions).

    ``pose`` maps world points into the camera frame (z forward, x right,
    y down). Pixel centres sit at integer coordinates.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    z_near: float = 1e-4

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def has_distortion(self) -> bool:
        return any((self.k1, self.k2, self.k3, self.p1, self.p2))

    def distort(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r2 = x * x + y * y
        radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x)
        yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y
        return xd, yd

    def project_camera(self, Xc) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project camera-frame points. Returns (uv, depth, valid)."""
        Xc = np.atleast_2d(np.asarray(Xc, dtype=np.float64))
        z = Xc[:, 2]
        valid = z > self.z_near
        zs = np.where(valid, z, 1.0)
        xd, yd = self.distort(Xc[:, 0] / zs, Xc[:, 1] / zs)
        uv = np.stack([self.fx * xd + self.cx, self.fy * yd + self.cy], axis=1)
        uv[~valid] = np.nan
        return uv, z, valid

    def project_points(self, X_world) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.project_camera(self.pose.apply(np.atleast_2d(X_world)))

    def jacobian(self, X_world) -> np.ndarray:
        """d(u, v)/d(X_world) for each point, shape (N, 2, 3)."""
        Xc = self.pose.apply(np.atleast_2d(np.asarray(X_world, dtype=np.float64)))
        X, Y, Z = Xc[:, 0], Xc[:, 1], np.where(Xc[:, 2] > self.z_near, Xc[:, 2], 1.0)
        x, y = X / Z, Y / Z
        r2 = x * x + y * y
        L = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))
        dL = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2)
        # distortion Jacobian d(xd, yd)/d(x, y)
        a = L + 2.0 * x * x * dL + 2.0 * self.p1 * y + 6.0 * self.p2 * x
        b = 2.0 * x * y * dL + 2.0 * self.p1 * x + 2.0 * self.p2 * y
        c = 2.0 * x * y * dL + 2.0 * self.p1 * x + 2.0 * self.p2 * y
        d = L + 2.0 * y * y * dL + 6.0 * self.p1 * y + 2.0 * self.p2 * x
        n = len(Xc)
        Jp = np.zeros((n, 2, 3))
        Jp[:, 0, 0] = 1.0 / Z
        Jp[:, 0, 2] = -X / (Z * Z)
        Jp[:, 1, 1] = 1.0 / Z
        Jp[:, 1, 2] = -Y / (Z * Z)
        Jd = np.empty((n, 2, 2))
        Jd[:, 0, 0] = self.fx * a
        Jd[:, 0, 1] = self.fx * b
        Jd[:, 1, 0] = self.fy * c
        Jd[:, 1, 1] = self.fy * d
        return Jd @ Jp @ self.pose.rotation

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "distortion": {"k1": self.k1, "k2": self.k2, "k3": self.k3, "p1": self.p1, "p2": self.p2},
            "pose": self.pose.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        unknown = set(d) - {"fx", "fy", "cx", "cy", "width", "height", "distortion", "pose"}
        dist = d.get("distortion", {})
        unknown |= {f"distortion.{k}" for k in set(dist) - {"k1", "k2", "k3", "p1", "p2"}}
        if unknown:
            raise ValueError(f"unknown camera keys: {sorted(unknown)}")
        return cls(
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
            int(d["width"]), int(d["height"]),
            **{k: float(dist.get(k, 0.0)) for k in ("k1", "k2", "k3", "p1", "p2")},
            pose=RigidTransform.from_dict(d.get("pose", {})),
        )


@dataclass(frozen=True, eq=False)
class AffineCamera:
    """``uv = A x + b`` with depth ``z = c . x + d``; an exactly affine projection.

    Used to check that sigma-point propagation is exact for affine maps.
    """

    A: np.ndarray
    b: np.ndarray
    width: int = 64
    height: int = 64
    depth_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    depth_offset: float = 0.0
    z_near: float = -np.inf

    def project_points(self, X_world):
        X = np.atleast_2d(np.asarray(X_world, dtype=np.float64))
        uv = X @ np.asarray(self.A).T + np.asarray(self.b)
        z = X @ np.asarray(self.depth_axis) + self.depth_offset
        return uv, z, z > self.z_near

    def jacobian(self, X_world) -> np.ndarray:
        n = len(np.atleast_2d(X_world))
        return np.broadcast_to(np.asarray(self.A, dtype=np.float64), (n, 2, 3)).copy()


def project(camera: CameraModel, x_world) -> tuple[np.ndarray, float] | None:
    """Project one world point; ``None`` when it lies behind the near plane."""
    uv, z, valid = camera.project_points(_as_vec3(x_world, "x_world"))
    if not valid[0]:
        return None
    return uv[0], float(z[0])


# -- LiDAR rig ---------------------------------------------------------------


def direction_from_angles(azimuth, elevation) -> np.ndarray:
    """Unit vectors for (azimuth, elevation): az=0, el=0 is +x, azimuth CCW about +z."""
    az = np.asarray(azimuth, dtype=np.float64)
    el = np.asarray(elevation, dtype=np.float64)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


@dataclass(frozen=True, eq=False)
class LidarSensor:
    """One LiDAR; ``extrinsic`` maps sensor frame to ego frame.

    ``pattern`` is an (M, 2) array of (azimuth, elevation) in radians.
    """

    extrinsic: RigidTransform
    pattern: np.ndarray
    max_range: float = 80.0
    name: str = ""

    def __post_init__(self):
        pat = np.asarray(self.pattern, dtype=np.float64).reshape(-1, 2)
        if len(pat) == 0:
            raise ValueError("scan pattern is empty")
        object.__setattr__(self, "pattern", _freeze(pat))
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    @property
    def origin(self) -> np.ndarray:
        return self.extrinsic.translation

    @staticmethod
    def grid_pattern(elevations_deg, n_azimuth: int, az_range_deg=(-180.0, 180.0)) -> np.ndarray:
        """Rows of constant elevation, ``n_azimuth`` columns over a half-open range."""
        el = np.deg2rad(np.asarray(elevations_deg, dtype=np.float64))
        lo, hi = np.deg2rad(az_range_deg)
        az = lo + (hi - lo) * np.arange(n_azimuth) / n_azimuth
        A, E = np.meshgrid(az, el)
        return np.stack([A.ravel(), E.ravel()], axis=1)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "origin": self.origin.tolist(),
            "quaternion": self.extrinsic.as_quaternion().tolist(),
            "max_range": self.max_range,
            "directions": self.pattern.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LidarSensor":
        ext = RigidTransform.from_quaternion(d.get("quaternion", (1, 0, 0, 0)), d.get("origin", (0, 0, 0)))
        if "directions" in d:
            pattern = np.asarray(d["directions"], dtype=np.float64)
        else:
            p = d["pattern"]
            el = p["elevation"]
            elevations = np.linspace(el["min_deg"], el["max_deg"], int(el["count"]))
            az = p.get("azimuth", {})
            pattern = cls.grid_pattern(
                elevations, int(az.get("count", 1024)),
                (az.get("min_deg", -180.0), az.get("max_deg", 180.0)),
            )
        return cls(ext, pattern, float(d.get("max_range", 80.0)), str(d.get("name", "")))


@dataclass(frozen=True, eq=False)
class LidarRig:
    sensors: tuple

    def __post_init__(self):
        sensors = tuple(self.sensors)
        if not sensors:
            raise ValueError("a rig needs at least one sensor")
        object.__setattr__(self, "sensors", sensors)

    def __len__(self) -> int:
        return len(self.sensors)

    def __iter__(self) -> Iterator[LidarSensor]:
        return iter(self.sensors)

    def to_dict(self) -> dict:
        return {"sensors": [s.to_dict() for s in self.sensors]}

    @classmethod
    def from_dict(cls, d: dict) -> "LidarRig":
        return cls(tuple(LidarSensor.from_dict(s) for s in d["sensors"]))


@dataclass(frozen=True, eq=False)
class Rays:
    """A batch of world-frame rays with provenance."""

    origins: np.ndarray
    directions: np.ndarray
    sensor_ids: np.ndarray
    ray_ids: np.ndarray
    max_range: np.ndarray

    def __len__(self) -> int:
        return len(self.origins)

    def subset(self, index) -> "Rays":
        return Rays(self.origins[index], self.directions[index], self.sensor_ids[index],
                    self.ray_ids[index], self.max_range[index])


def rays_world(rig: LidarRig, ego_pose: RigidTransform, sensor_mask=None) -> Rays:
    """One world-frame ray per pattern entry of every selected sensor."""
    if sensor_mask is None:
        sensor_mask = range(len(rig))
    mask = sorted({int(i) for i in sensor_mask})
    if not mask:
        raise ValueError("no sensor selected")
    for i in mask:
        if not 0 <= i < len(rig):
            raise IndexError(f"sensor index {i} out of range for a {len(rig)}-sensor rig")
    origins, dirs, sids, rids, ranges = [], [], [], [], []
    for i in mask:
        sensor = rig.sensors[i]
        to_world = ego_pose @ sensor.extrinsic
        d = direction_from_angles(sensor.pattern[:, 0], sensor.pattern[:, 1]) @ to_world.rotation.T
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        m = len(d)
        dirs.append(d)
        origins.append(np.broadcast_to(to_world.translation, (m, 3)))
        sids.append(np.full(m, i, dtype=np.int64))
        rids.append(np.arange(m, dtype=np.int64))
        ranges.append(np.full(m, sensor.max_range))
    return Rays(
        np.ascontiguousarray(np.concatenate(origins)),
        np.ascontiguousarray(np.concatenate(dirs)),
        np.concatenate(sids),
        np.concatenate(rids),
        np.concatenate(ranges),
    )
