"""Candidate pruning from speed-bounded uncertain regions.

Range queries use a cheap Euclidean test: the circle around an object's last
reader against the walking-graph footprint of the query. kNN queries bound
every object's network distance to the query point and keep only objects that
could beat the k-th best upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .floorplan import FloorPlan, GraphLocation, Rect, WalkingGraph
from .readings import ReadingStore


@dataclass(frozen=True)
class UncertainRegion:
    object_id: int
    reader_id: int
    t_last: int
    center: tuple[float, float]
    radius: float  # Euclidean radius around the reader
    net_radius: float  # same bound measured along the network


@dataclass(frozen=True)
class KnnBounds:
    object_id: int
    s: float
    l: float


def uncertain_region(store: ReadingStore, graph: WalkingGraph, obj: int, t_current: float,
                     u_max: float) -> UncertainRegion | None:
    det = store.latest_detection(obj)
    if det is None:
        return None
    reader_id, t_last = det
    r = graph.readers[graph.reader_index[reader_id]]
    travel = u_max * max(0.0, t_current - t_last)
    return UncertainRegion(obj, reader_id, t_last, r.point, travel + r.activation_range,
                           travel + r.net_reach)


def _point_segment_dist(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else min(1.0, max(0.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
    return math.hypot(p[0] - (ax + t * dx), p[1] - (ay + t * dy))


def query_footprint(plan: FloorPlan, q: Rect) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Walking-graph points that a query can contain, as segments.

    Hallway objects are located by their centerline projection, room objects
    by their door, so the footprint is the covered centerline stretches plus
    the door points of every touched room.
    """
    x0, y0, x1, y1 = q.bounds
    segs = []
    for h in sorted(plan.hallways, key=lambda h: h.id):
        hx0, hy0, hx1, hy1 = h.rect
        if min(x1, hx1) < max(x0, hx0) or min(y1, hy1) < max(y0, hy0):
            continue
        if h.horizontal:
            lo, hi = max(x0, min(h.x0, h.x1)), min(x1, max(h.x0, h.x1))
            if lo <= hi:
                segs.append(((lo, h.y0), (hi, h.y0)))
        else:
            lo, hi = max(y0, min(h.y0, h.y1)), min(y1, max(h.y0, h.y1))
            if lo <= hi:
                segs.append(((h.x0, lo), (h.x0, hi)))
    for room in sorted(plan.rooms, key=lambda r: r.id):
        rx0, ry0, rx1, ry1 = room.rect
        if min(x1, rx1) < max(x0, rx0) or min(y1, ry1) < max(y0, ry0):
            continue
        for d in room.doors:
            p = plan.door_point(plan.door_by_id[d])
            segs.append((p, p))
    return segs


def region_hits(ur: UncertainRegion, footprint) -> bool:
    return any(_point_segment_dist(ur.center, a, b) <= ur.radius + 1e-9 for a, b in footprint)


def prune_range_candidates(queries: Sequence[Rect], store: ReadingStore, graph: WalkingGraph,
                           t_current: float, u_max: float,
                           objects: Iterable[int] | None = None) -> set[int]:
    """Objects whose uncertain region reaches at least one query."""
    feet = [query_footprint(graph.plan, q) for q in queries]
    out = set()
    for obj in (store.objects if objects is None else objects):
        ur = uncertain_region(store, graph, obj, t_current, u_max)
        if ur is not None and any(region_hits(ur, f) for f in feet):
            out.add(obj)
    return out


def knn_bounds(graph: WalkingGraph, q: GraphLocation, ur: UncertainRegion,
               q_dist: np.ndarray | None = None) -> KnnBounds:
    """Min/max network distance from ``q`` to the object's uncertain region.

    ``q_dist`` (network distance from q to every node) can be passed in to
    avoid recomputation across objects.
    """
    r = graph.readers[graph.reader_index[ur.reader_id]]
    if q_dist is None:
        d = graph.location_distance(q, r.location)
    else:
        d = _dist_via(graph, q, q_dist, r.location)
    return KnnBounds(ur.object_id, max(0.0, d - ur.net_radius), d + ur.net_radius)


def _dist_via(graph: WalkingGraph, q: GraphLocation, q_dist: np.ndarray, loc: GraphLocation) -> float:
    best = min(q_dist[n] + d for n, d in graph.anchors_of(loc))
    if not q.is_room and not loc.is_room and q.edge == loc.edge:
        best = min(best, abs(q.offset - loc.offset))
    return float(best)


def prune_knn_candidates(graph: WalkingGraph, q: GraphLocation, k: int, store: ReadingStore,
                         t_current: float, u_max: float,
                         objects: Iterable[int] | None = None) -> set[int]:
    """Objects that may rank among the k nearest: ``s <= f``, f the k-th smallest ``l``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    qd = graph.distances_from(q)
    bounds = []
    for obj in (store.objects if objects is None else objects):
        ur = uncertain_region(store, graph, obj, t_current, u_max)
        if ur is not None:
            bounds.append(knn_bounds(graph, q, ur, qd))
    if len(bounds) <= k:
        return {b.object_id for b in bounds}
    f = sorted(b.l for b in bounds)[k - 1]
    return {b.object_id for b in bounds if b.s <= f}


def knn_threshold(bounds: Sequence[KnnBounds], k: int) -> float:
    ls = sorted(b.l for b in bounds)
    return ls[k - 1] if len(ls) >= k else math.inf
