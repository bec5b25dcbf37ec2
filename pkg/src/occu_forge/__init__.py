"""Occupancy curation, sparse splat rendering and LiDAR simulation for driving scenes."""
from .geometry import (AffineCamera, CameraModel, LidarRig, LidarSensor, OrientedBox, PointCloud, Rays,
                       RigidTransform, project, rays_world)
from .grid import DEFAULT_CLASS_TABLE, ClassTable, SemanticOccupancyGrid, iou_miou, load_occg, save_occg, voxelize

__version__ = "0.1.0"

__all__ = [
    "AffineCamera", "CameraModel", "LidarRig", "LidarSensor", "OrientedBox", "PointCloud", "Rays",
    "RigidTransform", "project", "rays_world", "DEFAULT_CLASS_TABLE", "ClassTable",
    "SemanticOccupancyGrid", "iou_miou", "load_occg", "save_occg", "voxelize",
]
