"""Spatial/temporal scenario split by ego and traffic speed."""
from __future__ import annotations

import enum

import numpy as np

from .clip import ScenarioClip

__all__ = ["Scenario", "ego_speed", "traffic_speed", "classify_scenario"]


class Scenario(str, enum.Enum):
    SPATIAL = "Spatial"
    TEMPORAL = "Temporal"
    NEITHER = "Neither"


def _check(clip: ScenarioClip) -> None:
    if len(clip) < 2:
        raise ValueError("cannot estimate speed from a single frame")


def ego_speed(clip: ScenarioClip) -> float:
    """Mean finite-difference speed of the ego pose (m/s)."""
    _check(clip)
    t = np.array([f.timestamp for f in clip.frames])
    p = np.array([f.ego_pose.translation for f in clip.frames])
    return float(np.mean(np.linalg.norm(np.diff(p, axis=0), axis=1) / np.diff(t)))


def traffic_speed(clip: ScenarioClip) -> float:
    """Max over tracks of the mean box-centre speed between consecutive sightings."""
    _check(clip)
    best = 0.0
    for tid in clip.track_ids:
        seen = [(f.timestamp, f.box(tid).center) for f in clip.frames if f.box(tid) is not None]
        if len(seen) < 2:
            continue
        t = np.array([s[0] for s in seen])
        c = np.array([s[1] for s in seen])
        best = max(best, float(np.mean(np.linalg.norm(np.diff(c, axis=0), axis=1) / np.diff(t))))
    return best


def classify_scenario(clip: ScenarioClip, theta_ego: float = 0.5, theta_other: float = 0.5) -> Scenario:
    v_ego = ego_speed(clip)
    if v_ego > theta_ego:
        return Scenario.SPATIAL
    if v_ego < theta_ego and traffic_speed(clip) > theta_other:
        return Scenario.TEMPORAL
    return Scenario.NEITHER
