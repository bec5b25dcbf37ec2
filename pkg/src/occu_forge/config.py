"""Pipeline configuration: one section per stage, strict keys, dotted overrides.

A resolved configuration is a plain JSON document with every default filled
in. Commands echo it next to their outputs; feeding the echo back with
``--config`` reproduces the run.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .curation.pipeline import CurationConfig
from .lidar.simulate import LidarConfig
from .metrics import BevBinning
from .splat.projection import UtParams
from .splat.renderer import RenderOptions

__all__ = ["ConfigError", "RenderSection", "LidarSection", "MetricsSection", "IoSection",
           "PipelineConfig", "parse_override"]


class ConfigError(ValueError):
    """Unknown key, bad value or unreadable config file."""


@dataclass
class RenderSection:
    gaussian_scale: float = 0.01
    opacity: float = 0.99
    projection: str = "ut"
    ut_alpha: float = 1.0
    ut_beta: float = 2.0
    ut_kappa: float = 0.0
    tile: int = 16
    alpha_min: float = 1.0 / 255.0
    normalize_depth: bool = True

    def validate(self) -> None:
        if not self.gaussian_scale > 0:
            raise ConfigError("render.gaussian_scale must be positive")
        if not 0 < self.opacity <= 1:
            raise ConfigError("render.opacity must lie in (0, 1]")
        if self.projection not in ("ut", "ewa"):
            raise ConfigError("render.projection must be 'ut' or 'ewa'")
        if self.tile < 1:
            raise ConfigError("render.tile must be positive")
        if not 0 < self.alpha_min < 1:
            raise ConfigError("render.alpha_min must lie in (0, 1)")

    def options(self) -> RenderOptions:
        return RenderOptions(self.gaussian_scale, self.opacity, self.projection,
                             UtParams(self.ut_alpha, self.ut_beta, self.ut_kappa),
                             self.tile, self.alpha_min, self.normalize_depth)


@dataclass
class LidarSection:
    n_uniform: int = 1024
    n_resample: int = 64
    s_sharp: float | None = None
    w_min: float = 1e-3
    normalize_depth: bool = True
    range_rows: int = 64
    range_cols: int = 1024
    n_freq: int = 4
    attenuation: float = 80.0
    p_graze: float = 0.3
    embedding_matrix: str | None = None

    def validate(self) -> None:
        if self.range_rows < 2 or self.range_cols < 2:
            raise ConfigError("lidar.range_rows and lidar.range_cols must be at least 2")
        self.build(0)

    def build(self, seed: int) -> LidarConfig:
        try:
            return LidarConfig(self.n_uniform, self.n_resample, self.s_sharp, self.w_min,
                               self.normalize_depth, seed, self.range_rows, self.range_cols,
                               self.n_freq, self.attenuation, self.p_graze)
        except ValueError as exc:
            raise ConfigError(f"lidar: {exc}") from exc


@dataclass
class MetricsSection:
    bev_bins: list = field(default_factory=lambda: [100, 100])
    bev_x_range: list = field(default_factory=lambda: [-50.0, 50.0])
    bev_y_range: list = field(default_factory=lambda: [-50.0, 50.0])
    mmd_sigma: float | None = None

    def validate(self) -> None:
        self.binning()
        if self.mmd_sigma is not None and not self.mmd_sigma > 0:
            raise ConfigError("metrics.mmd_sigma must be positive")

    def binning(self) -> BevBinning:
        try:
            return BevBinning(tuple(int(b) for b in self.bev_bins), tuple(self.bev_x_range),
                              tuple(self.bev_y_range))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"metrics: {exc}") from exc


@dataclass
class IoSection:
    ply_binary: bool = True
    raw_depth: bool = True
    class_table: str | None = None

    def validate(self) -> None:
        pass


def _curation_validate(c: CurationConfig) -> None:
    if len(c.dims) != 3 or min(c.dims) < 1:
        raise ConfigError("curation.dims must be three positive integers")
    if not c.voxel_size > 0:
        raise ConfigError("curation.voxel_size must be positive")
    if len(c.origin) != 3:
        raise ConfigError("curation.origin must have three entries")
    if c.filter_mode not in ("knn", "centroid"):
        raise ConfigError("curation.filter_mode must be 'knn' or 'centroid'")
    if c.filter_k_neighbors < 1 or not c.filter_k > 0:
        raise ConfigError("curation.filter_k_neighbors must be >= 1 and curation.filter_k > 0")


_SECTIONS = {
    "curation": CurationConfig,
    "render": RenderSection,
    "lidar": LidarSection,
    "metrics": MetricsSection,
    "io": IoSection,
}
_GLOBALS = ("seed", "threads")


@dataclass
class PipelineConfig:
    curation: CurationConfig = field(default_factory=CurationConfig)
    render: RenderSection = field(default_factory=RenderSection)
    lidar: LidarSection = field(default_factory=LidarSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    io: IoSection = field(default_factory=IoSection)
    seed: int = 0
    threads: int = 0          # 0 = leave numba's default (or OCCU_FORGE_THREADS)

    def validate(self) -> "PipelineConfig":
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if not isinstance(self.threads, int) or self.threads < 0:
            raise ConfigError("threads must be a non-negative integer")
        _curation_validate(self.curation)
        for name in ("render", "lidar", "metrics", "io"):
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict:
        out = {name: _jsonable(dataclasses.asdict(getattr(self, name))) for name in _SECTIONS}
        out["seed"] = self.seed
        out["threads"] = self.threads
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        cfg = cls()
        cfg.update(doc)
        return cfg.validate()

    @classmethod
    def load(cls, path=None, overrides=()) -> "PipelineConfig":
        """Defaults, then the JSON file at ``path``, then ``section.key=value`` overrides."""
        cfg = cls()
        if path is not None:
            try:
                doc = json.loads(Path(path).read_text())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(doc, dict):
                raise ConfigError(f"config {path} must hold a JSON object")
            cfg.update(doc)
        for item in overrides:
            key, value = parse_override(item)
            cfg.set(key, value)
        return cfg.validate()

    def update(self, doc: dict) -> None:
        for key, value in doc.items():
            if key in _GLOBALS:
                self.set(key, value)
            elif key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                for sub, v in value.items():
                    self.set(f"{key}.{sub}", v)
            else:
                raise ConfigError(f"unknown config key {key!r}")

    def set(self, dotted: str, value) -> None:
        parts = dotted.split(".")
        if len(parts) == 1 and parts[0] in _GLOBALS:
            setattr(self, parts[0], value)
            return
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"unknown config key {dotted!r}")
        section = getattr(self, parts[0])
        names = {f.name for f in dataclasses.fields(section)}
        if parts[1] not in names:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(value, list) and parts[0] == "curation" and parts[1] in ("dims", "origin"):
            value = tuple(value)
        setattr(section, parts[1], value)


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def parse_override(item: str) -> tuple[str, object]:
    """``section.key=value``; the value is parsed as JSON, falling back to a bare string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {item!r} is not of the form section.key=value")
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return key.strip(), value
