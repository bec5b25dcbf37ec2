"""``occu-forge`` command line front end.

Exit codes: 0 success, 1 computation failure, 2 usage or IO error. Every
command prints one JSON document on stdout holding the resolved
configuration, the files written and a command report.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig
from .curation import ManifestError, classify_scenario, curate, load_manifest, save_manifest
from .curation.pipeline import CurationError
from .geometry import CameraModel, LidarRig, PointCloud
from .grid import DEFAULT_CLASS_TABLE, ClassTable, iou_miou, load_occg, save_occg
from .io import read_ply, write_ply
from .lidar import HistogramEmbedder, LidarConfig, save_rmap, set_threads, simulate, smoothness_loss
from .metrics import bev_histogram, chamfer, jsd, metric_report, mmd
from .splat import render_views, write_maps
from .synth import SCENES

__all__ = ["main", "build_parser", "UsageError"]

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit code 2)."""


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _opacity(text: str) -> float:
    value = _positive_float(text)
    if value > 1:
        raise argparse.ArgumentTypeError(f"opacity must lie in (0, 1], got {text}")
    return value


def _sensor_list(text: str) -> list[int]:
    try:
        ids = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sensors must be comma-separated indices, got {text!r}") from None
    if not ids:
        raise argparse.ArgumentTypeError("no sensor selected")
    return ids


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (sections curation, render, lidar, metrics, io)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config entry; the value is parsed as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occu-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="curate a scenario clip manifest into a semantic occupancy grid")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output OCCG file")
    p.add_argument("--report", type=Path, help="JSON report path (default: next to --out)")
    _common(p)

    p = sub.add_parser("render", help="render depth and semantic maps from an occupancy grid")
    p.add_argument("grid", type=Path)
    p.add_argument("cameras", type=Path, help="JSON list of cameras (or {\"cameras\": [...]})")
    p.add_argument("--projection", choices=("ewa", "ut"))
    p.add_argument("--gaussian-scale", type=_positive_float)
    p.add_argument("--opacity", type=_opacity)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _common(p)

    p = sub.add_parser("lidar", help="simulate a LiDAR sweep over an occupancy grid")
    p.add_argument("grid", type=Path)
    p.add_argument("rig", type=Path, help="rig JSON")
    p.add_argument("--sensors", type=_sensor_list, help="comma-separated sensor indices (default: all)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _common(p)

    p = sub.add_parser("eval", help="compare occupancy grids or point clouds")
    p.add_argument("kind", choices=("occ", "pc"))
    p.add_argument("--pred", type=Path, nargs="+", required=True,
                   help="predicted grid (occ) or one or more point clouds (pc)")
    p.add_argument("--ref", type=Path, nargs="+", required=True,
                   help="reference grid (occ) or one or more point clouds (pc)")
    p.add_argument("--out", type=Path, help="also write the JSON report here")
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic clip with its analytic ground truth")
    p.add_argument("scene", choices=sorted(SCENES))
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--noise", type=float, default=0.0, help="range noise standard deviation (m)")
    p.add_argument("--seed", type=int)
    _common(p)

    p = sub.add_parser("filter-scenarios", help="split manifests into Spatial / Temporal / Neither")
    p.add_argument("directory", type=Path, help="searched recursively for manifest.json files")
    p.add_argument("--out", type=Path, help="also write the lists here")
    _common(p)
    return parser


def _resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config, args.overrides)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if args.command == "render":
        if args.projection is not None:
            cfg.render.projection = args.projection
        if args.gaussian_scale is not None:
            cfg.render.gaussian_scale = args.gaussian_scale
        if args.opacity is not None:
            cfg.render.opacity = args.opacity
    cfg.validate()
    set_threads(cfg.threads if cfg.threads > 0 else None)
    return cfg


def _class_table(cfg: PipelineConfig) -> ClassTable:
    if cfg.io.class_table is None:
        return DEFAULT_CLASS_TABLE
    try:
        return ClassTable.load(cfg.io.class_table)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read class table {cfg.io.class_table}: {exc}") from exc


def _read(loader, path, what):
    try:
        return loader(path)
    except ManifestError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read {what} {path}: {exc}") from exc


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _load_cameras(path) -> list[CameraModel]:
    doc = json.loads(Path(path).read_text())
    items = doc["cameras"] if isinstance(doc, dict) else doc
    return [CameraModel.from_dict(c) for c in items]


def _load_rig(path) -> LidarRig:
    return LidarRig.from_dict(json.loads(Path(path).read_text()))


def cmd_curate(args, cfg: PipelineConfig) -> dict:
    clip = _read(load_manifest, args.manifest, "manifest")
    try:
        grid, report = curate(clip, cfg.curation, return_report=True)
    except CurationError as exc:
        raise RuntimeError(f"curation failed at stage {exc.stage!r}: {exc.cause}") from exc
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_occg(grid, args.out)
    report_path = args.report or args.out.with_suffix(".report.json")
    _write_json(report_path, report)
    return {"outputs": [str(args.out), str(report_path)], "report": report}


def cmd_render(args, cfg: PipelineConfig) -> dict:
    grid = _read(load_occg, args.grid, "occupancy grid")
    cameras = _read(_load_cameras, args.cameras, "cameras")
    if not cameras:
        raise UsageError(f"{args.cameras} lists no cameras")
    table = _class_table(cfg)
    maps = render_views(grid, cameras, cfg.render.options())
    outputs, views = [], []
    for i, m in enumerate(maps):
        paths = write_maps(m, args.out, f"view_{i:02d}", table, cfg.io.raw_depth)
        outputs += [str(p) for p in paths]
        views.append({"view": i, "covered_pixels": int(np.count_nonzero(m.coverage > 0)),
                      **{k: int(v) for k, v in m.diagnostics.items()}})
    return {"outputs": outputs, "report": {"views": views}}


def cmd_lidar(args, cfg: PipelineConfig) -> dict:
    grid = _read(load_occg, args.grid, "occupancy grid")
    rig = _read(_load_rig, args.rig, "rig")
    active = args.sensors
    if active is not None:
        bad = [i for i in active if not 0 <= i < len(rig)]
        if bad:
            raise UsageError(f"unknown sensor index {bad[0]} (rig has {len(rig)} sensors)")
    embedder = None
    if cfg.lidar.embedding_matrix is not None:
        embedder = _read(HistogramEmbedder.load, cfg.lidar.embedding_matrix, "embedding matrix")
    lidar_cfg: LidarConfig = cfg.lidar.build(cfg.seed)
    result = simulate(grid, rig, active=active, config=lidar_cfg, embedder=embedder)
    args.out.mkdir(parents=True, exist_ok=True)
    cloud = result.point_cloud()
    # labels stay internal; the file carries exactly the documented properties
    cloud = PointCloud(cloud.xyz, cloud.intensity, None, cloud.attrs)
    ply, rmap_path, rep_path = args.out / "points.ply", args.out / "range.rmap", args.out / "report.json"
    write_ply(ply, cloud, binary=cfg.io.ply_binary)
    save_rmap(rmap_path, result.range_map)
    report = {
        "rays": int(len(result.depth)),
        "points": int(len(cloud)),
        "dropped_by_prior": int(np.count_nonzero(result.status == 1)),
        "dropped_by_render": int(np.count_nonzero(result.status == 2)),
        "sensors": sorted(set(int(s) for s in result.rays.sensor_ids)),
        "smoothness": smoothness_loss(result.range_map),
        "range_map": {"rows": lidar_cfg.range_rows, "cols": lidar_cfg.range_cols,
                      "el_range": list(result.range_map.el_range)},
    }
    _write_json(rep_path, report)
    return {"outputs": [str(ply), str(rmap_path), str(rep_path)], "report": report}


def cmd_eval(args, cfg: PipelineConfig) -> dict:
    if args.kind == "occ":
        if len(args.pred) != 1 or len(args.ref) != 1:
            raise UsageError("occ evaluation takes exactly one --pred and one --ref grid")
        pred = _read(load_occg, args.pred[0], "occupancy grid")
        ref = _read(load_occg, args.ref[0], "occupancy grid")
        if pred.dims != ref.dims:
            raise UsageError(f"grid dims differ: {pred.dims} vs {ref.dims}")
        scores = iou_miou(pred, ref)
        inputs = {"pred": args.pred[0], "ref": args.ref[0]}
        report = {"kind": "occ", "metrics": [
            metric_report("iou", scores["iou_occupied"], {}, inputs),
            metric_report("miou", scores["miou"], {"classes": sorted(int(c) for c in scores["per_class_iou"])},
                          inputs),
        ], "per_class_iou": {str(int(k)): float(v) for k, v in scores["per_class_iou"].items()}}
    else:
        preds = [_read(read_ply, p, "point cloud") for p in args.pred]
        refs = [_read(read_ply, p, "point cloud") for p in args.ref]
        binning = cfg.metrics.binning()
        params = {"binning": binning.to_dict(), "features": "bev_histogram"}
        hp = [bev_histogram(c, binning) for c in preds]
        hr = [bev_histogram(c, binning) for c in refs]
        pooled_p = bev_histogram(PointCloud.concatenate(preds), binning)
        pooled_r = bev_histogram(PointCloud.concatenate(refs), binning)
        inputs = {f"pred{i}": p for i, p in enumerate(args.pred)} | {f"ref{i}": p for i, p in enumerate(args.ref)}
        metrics = []
        if len(preds[0]) and len(refs[0]):
            metrics.append(metric_report("chamfer", chamfer(preds[0], refs[0]), {},
                                         {"pred0": args.pred[0], "ref0": args.ref[0]}))
        if not (pooled_p.empty or pooled_r.empty):
            metrics.append(metric_report("jsd", jsd(pooled_p, pooled_r), params, inputs))
        if len(hp) >= 2 and len(hr) >= 2:
            metrics.append(metric_report("mmd", mmd(hp, hr, cfg.metrics.mmd_sigma),
                                         params | {"kernel": "gaussian", "sigma": cfg.metrics.mmd_sigma
                                                   if cfg.metrics.mmd_sigma is not None else "median"},
                                         inputs))
        report = {"kind": "pc", "metrics": metrics}
    outputs = []
    if args.out is not None:
        _write_json(args.out, report)
        outputs.append(str(args.out))
    return {"outputs": outputs, "report": report}


def cmd_synth(args, cfg: PipelineConfig) -> dict:
    build = SCENES[args.scene]
    if args.scene == "moving-box":
        ds = build(noise=args.noise, seed=cfg.seed)
        cameras = []
    else:
        scene = build()
        ds = scene.dataset(noise=args.noise, seed=cfg.seed)
        cameras = scene.cameras
    out = args.out
    manifest = save_manifest(ds.clip, out)
    gt = out / "ground_truth.occg"
    save_occg(ds.ground_truth, gt)
    rig = out / "rig.json"
    _write_json(rig, ds.rig.to_dict())
    cams = out / "cameras.json"
    _write_json(cams, {"cameras": [c.to_dict() for c in cameras]})
    conf = out / "config.json"
    scene_cfg = PipelineConfig.from_dict({"curation": ds.curation_overrides, "seed": cfg.seed})
    _write_json(conf, scene_cfg.to_dict())
    report = {"scene": args.scene, "frames": len(ds.clip), "tracks": ds.clip.track_ids,
              "ground_truth_occupied": int(ds.ground_truth.occupied.sum()),
              "points_per_frame": [len(f.sweep) for f in ds.clip.frames]}
    return {"outputs": [str(p) for p in (manifest, gt, rig, cams, conf)], "report": report}


def cmd_filter_scenarios(args, cfg: PipelineConfig) -> dict:
    if not args.directory.is_dir():
        raise UsageError(f"{args.directory} is not a directory")
    lists = {"Spatial": [], "Temporal": [], "Neither": [], "skipped": {}}
    for path in sorted(args.directory.rglob("manifest.json")):
        clip = _read(load_manifest, path, "manifest")
        name = path.relative_to(args.directory).as_posix()
        try:
            kind = classify_scenario(clip, cfg.curation.theta_ego, cfg.curation.theta_other)
        except ValueError as exc:
            # speeds are undefined for single-frame clips
            lists["skipped"][name] = str(exc)
            continue
        lists[kind.value].append(name)
    outputs = []
    if args.out is not None:
        _write_json(args.out, lists)
        outputs.append(str(args.out))
    return {"outputs": outputs, "report": lists}


COMMANDS = {
    "curate": cmd_curate,
    "render": cmd_render,
    "lidar": cmd_lidar,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "filter-scenarios": cmd_filter_scenarios,
}


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _resolve_config(args)
        result = COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, ManifestError) as exc:
        print(f"occu-forge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"occu-forge {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # computation failure
        print(f"occu-forge {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    doc = {"command": args.command, "config": cfg.to_dict(), **result}
    print(json.dumps(doc, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
