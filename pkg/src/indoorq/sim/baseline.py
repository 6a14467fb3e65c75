"""Reachability baseline: mass spread evenly over every anchor the object could reach."""

from __future__ import annotations

import numpy as np

from ..floorplan import AnchorGrid
from ..readings import ReadingStore


def reachable_anchors(grid: AnchorGrid, reader_id: int, radius: float) -> np.ndarray:
    g = grid.graph
    cache = grid.__dict__.setdefault("_reader_anchor_dist", {})
    d = cache.get(reader_id)
    if d is None:
        d = cache[reader_id] = grid.anchor_distances(g.readers[g.reader_index[reader_id]].location)
    return np.flatnonzero(d <= radius + 1e-9)


def uniform_baseline(store: ReadingStore, grid: AnchorGrid, candidates, t_current: int,
                     u_max: float = 1.5) -> dict[int, list[tuple[int, float]]]:
    out = {}
    g = grid.graph
    for obj in sorted(candidates):
        det = store.latest_detection(obj)
        if det is None:
            continue
        reader_id, t_last = det
        r = g.readers[g.reader_index[reader_id]]
        radius = u_max * max(0, t_current - t_last) + r.activation_range
        ids = reachable_anchors(grid, reader_id, radius)
        p = 1.0 / len(ids)
        out[obj] = [(int(a), p) for a in ids]
    return out
