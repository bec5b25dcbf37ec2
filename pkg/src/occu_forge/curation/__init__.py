"""Foreground/background separated occupancy curation."""
from .aggregation import (Aggregate, BackgroundParams, SeparatedFrame, aggregate_background,
                          aggregate_object, separate)
from .clip import BevMap, Frame, ManifestError, ScenarioClip, load_manifest, save_manifest
from .filters import SmallCloudWarning, StatisticalOutlierFilter, statistical_filter
from .icp import IcpParams, IcpRegistration, IcpResult, RegistrationError, icp_register, voxel_downsample
from .labeling import hybrid_label
from .pipeline import CurationConfig, CurationError, FbsaCurator, curate
from .scenario import Scenario, classify_scenario, ego_speed, traffic_speed
from .tsdf import DensifyParams, TsdfDensifier, densify

__all__ = [
    "Aggregate", "BackgroundParams", "SeparatedFrame", "aggregate_background", "aggregate_object",
    "separate", "BevMap", "Frame", "ManifestError", "ScenarioClip", "load_manifest", "save_manifest",
    "SmallCloudWarning", "StatisticalOutlierFilter", "statistical_filter", "IcpParams",
    "IcpRegistration", "IcpResult", "RegistrationError", "icp_register", "voxel_downsample",
    "hybrid_label", "CurationConfig", "CurationError", "FbsaCurator", "curate", "Scenario",
    "classify_scenario", "ego_speed", "traffic_speed", "DensifyParams", "TsdfDensifier", "densify",
]
