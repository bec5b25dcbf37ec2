"""Occupancy-guided LiDAR simulation."""
from .embeddings import (EMBED_DIM, N_BINS, HistogramEmbedder, SensorEmbedding, fourier_encode, histogram,
                         histogram_embed, plucker, sensor_embedding)
from .field import OccupancyField, sdf_at
from .rangemap import RangeMap, load_rmap, range_project, save_rmap, smoothness_loss
from .render import (AnalyticHead, HeadModel, HitInfo, VolumeRender, composite_depth, ray_feature,
                     render_weights, volume_render)
from .sampling import NEAR, RaySamples, ray_seeds, sample_prior
from .simulate import LidarConfig, LidarSimulator, SimulationResult, set_threads, simulate, simulate_rays

__all__ = [
    "EMBED_DIM", "N_BINS", "HistogramEmbedder", "SensorEmbedding", "fourier_encode", "histogram",
    "histogram_embed", "plucker", "sensor_embedding", "OccupancyField", "sdf_at", "RangeMap", "load_rmap",
    "range_project", "save_rmap", "smoothness_loss", "AnalyticHead", "HeadModel", "HitInfo", "VolumeRender",
    "composite_depth", "ray_feature", "render_weights", "volume_render", "NEAR", "RaySamples", "ray_seeds",
    "sample_prior", "LidarConfig", "LidarSimulator", "SimulationResult", "set_threads", "simulate",
    "simulate_rays",
]
