"""Ground-truth query answers from true positions."""

from __future__ import annotations

from typing import Sequence

from ..floorplan import GraphLocation, Rect, WalkingGraph
from .traces import Trajectory


def ground_truth_range(traces: Sequence[Trajectory], q: Rect, t: int) -> set[int]:
    return {tr.object_id for tr in traces if q.contains(*tr.xy[t])}


def ground_truth_knn(traces: Sequence[Trajectory], graph: WalkingGraph, q: GraphLocation,
                     k: int, t: int) -> set[int]:
    """The k objects nearest to ``q`` by network distance; room occupants count from their door."""
    dq = graph.distances_from(q)
    ranked = []
    for tr in traces:
        loc = tr.locations[t]
        d = min(dq[n] + off for n, off in graph.anchors_of(loc))
        if not q.is_room and not loc.is_room and loc.edge == q.edge:
            d = min(d, abs(loc.offset - q.offset))
        if q.is_room and loc.is_room and q.room == loc.room:
            d = 0.0
        ranked.append((round(d, 9), tr.object_id))
    ranked.sort()
    return {o for _, o in ranked[:k]}
