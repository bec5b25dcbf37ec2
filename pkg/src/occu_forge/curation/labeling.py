"""Hybrid semantic labeling: boxes for foreground, BEV map for background."""
from __future__ import annotations

import numpy as np

from ..geometry import RigidTransform
from ..grid import DEFAULT_CLASS_TABLE, SemanticOccupancyGrid
from .aggregation import assign_boxes
from .clip import BevMap

__all__ = ["hybrid_label"]


def hybrid_label(grid: SemanticOccupancyGrid, boxes, bev: BevMap | None,
                 grid_to_world: RigidTransform | None = None,
                 fallback_class: int | None = None) -> SemanticOccupancyGrid:
    """Relabel occupied voxels; the occupied/empty mask is left untouched.

    A voxel whose centre lies in a box takes that box's class (nearest centre
    wins on overlap). Otherwise it takes the BEV label under its centre, or
    ``fallback_class`` (default: generic-object) when it projects outside the
    BEV map. ``grid_to_world`` maps voxel centres into the frame of the boxes
    and BEV map.
    """
    if fallback_class is None:
        fallback_class = DEFAULT_CLASS_TABLE.id_of("generic-object")
    idx = grid.occupied_indices()
    if len(idx) == 0:
        return grid
    centres = grid.voxel_to_world_center(idx)
    if grid_to_world is not None:
        centres = grid_to_world.apply(centres)
    boxes = list(boxes)
    owner = assign_boxes(centres, boxes)
    labels = np.full(len(idx), fallback_class, dtype=np.int64)
    fg = owner >= 0
    if boxes:
        box_cls = np.array([b.class_id for b in boxes], dtype=np.int64)
        labels[fg] = box_cls[owner[fg]]
    if bev is not None:
        bg = ~fg
        bev_labels, inside = bev.lookup(centres[bg])
        sub = labels[bg]
        hit = inside & (bev_labels > 0)
        sub[hit] = bev_labels[hit]
        labels[bg] = sub
    classes = np.array(grid.classes)
    classes[idx[:, 0], idx[:, 1], idx[:, 2]] = labels
    return grid.with_classes(classes)
