"""End-to-end occupancy curation from a scenario clip."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..geometry import PointCloud
from ..grid import SemanticOccupancyGrid, voxelize
from .aggregation import BackgroundParams, aggregate_background, aggregate_object, box_at
from .clip import ScenarioClip
from .icp import IcpParams
from .labeling import hybrid_label
from .tsdf import DensifyParams, densify

__all__ = ["CurationConfig", "CurationError", "curate", "FbsaCurator"]


class CurationError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class CurationConfig:
    dims: tuple = (400, 400, 32)
    voxel_size: float = 0.25
    origin: tuple = (-50.0, -50.0, -3.0)
    reference_frame: int | None = None
    filter_k_neighbors: int = 20
    filter_k: float = 2.0
    filter_mode: str = "knn"
    refine: bool = True
    icp_downsample: float = 0.5
    icp_radius_start: float = 2.0
    icp_radius_decay: float = 0.9
    icp_radius_floor: float = 0.3
    icp_max_iterations: int = 50
    icp_tolerance: float = 1e-4
    tsdf_voxel: float | None = None
    truncation_voxels: int = 3
    normal_neighbors: int = 24
    densify_min_points: int = 50
    theta_ego: float = 0.5
    theta_other: float = 0.5

    def background_params(self) -> BackgroundParams:
        icp = IcpParams(self.icp_downsample, self.icp_radius_start, self.icp_radius_decay,
                        self.icp_radius_floor, self.icp_max_iterations, self.icp_tolerance)
        return BackgroundParams(self.filter_k_neighbors, self.filter_k, self.filter_mode, icp, self.refine)

    def densify_params(self) -> DensifyParams:
        h = self.tsdf_voxel if self.tsdf_voxel is not None else self.voxel_size / 2.0
        return DensifyParams(h, self.truncation_voxels, self.normal_neighbors, self.densify_min_points)


@dataclass
class _Stage:
    name: str
    report: dict = field(default_factory=dict)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, CurationError):
            raise CurationError(self.name, exc) from exc
        return False


def curate(clip: ScenarioClip, config: CurationConfig | None = None, return_report: bool = False):
    """Separate, aggregate, densify, re-pose, voxelize and label one clip.

    The grid is expressed in the ego frame of the reference frame (the
    middle frame unless ``config.reference_frame`` says otherwise).
    """
    config = config or CurationConfig()
    if len(clip) == 0:
        raise CurationError("input", ValueError("clip has no frames"))
    ref = config.reference_frame if config.reference_frame is not None else len(clip) // 2
    if not -len(clip) <= ref < len(clip):
        raise CurationError("input", IndexError(f"reference frame {ref} out of range"))
    ref_pose = clip.frames[ref].ego_pose
    world_to_ref = ref_pose.inverse()
    dparams = config.densify_params()
    report: dict = {"reference_frame": ref, "frames": len(clip)}

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with _Stage("background"):
            bg = aggregate_background(clip, config.background_params())
            report["background_points"] = len(bg.points)
            report["background_per_frame"] = list(bg.per_frame_counts)
        with _Stage("densify-background"):
            dense_bg = densify(bg.points, dparams, bg.origins)
            report["background_densified"] = len(dense_bg)
        objects = []
        with _Stage("foreground"):
            report["objects"] = {}
            for tid in clip.track_ids:
                agg = aggregate_object(clip, tid)
                dense = densify(agg.points, dparams, agg.origins) if len(agg.points) else agg.points
                box = box_at(clip, tid, ref)
                objects.append(dense.with_xyz(box.pose.apply(dense.xyz)))
                report["objects"][tid] = {"points": len(agg.points), "densified": len(dense)}
    report["warnings"] = [str(w.message) for w in caught]

    with _Stage("voxelize"):
        merged = PointCloud.concatenate([PointCloud(dense_bg.xyz)] + [PointCloud(o.xyz) for o in objects])
        merged = merged.with_xyz(world_to_ref.apply(merged.xyz))
        grid, n_out = voxelize(merged, config.dims, (config.voxel_size,) * 3, config.origin)
        report["voxelized_points"] = len(merged)
        report["out_of_bounds"] = n_out
        report["occupied_voxels"] = int(grid.occupied.sum())
    with _Stage("label"):
        boxes = [box_at(clip, tid, ref) for tid in clip.track_ids]
        grid = hybrid_label(grid, boxes, clip.bev_map, grid_to_world=ref_pose)
    return (grid, report) if return_report else grid


class FbsaCurator(BaseEstimator):
    """Estimator front end: ``fit(clip)`` curates, ``predict()`` returns the grid."""

    def __init__(self, dims=(400, 400, 32), voxel_size=0.25, origin=(-50.0, -50.0, -3.0),
                 reference_frame=None, filter_k_neighbors=20, filter_k=2.0, filter_mode="knn",
                 refine=True, tsdf_voxel=None, truncation_voxels=3):
        self.dims = dims
        self.voxel_size = voxel_size
        self.origin = origin
        self.reference_frame = reference_frame
        self.filter_k_neighbors = filter_k_neighbors
        self.filter_k = filter_k
        self.filter_mode = filter_mode
        self.refine = refine
        self.tsdf_voxel = tsdf_voxel
        self.truncation_voxels = truncation_voxels

    def fit(self, X: ScenarioClip, y=None):
        cfg = CurationConfig(**self.get_params())
        self.grid_, self.report_ = curate(X, cfg, return_report=True)
        return self

    def predict(self, X=None) -> SemanticOccupancyGrid:
        check_is_fitted(self, "grid_")
        return self.grid_
