"""Range and kNN queries over a published index snapshot, snapshot and continuous."""

from __future__ import annotations

import heapq
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .floorplan import AnchorGrid, FloorPlan, GraphLocation, Rect, anchor_weights, decompose_range, project_to_graph
from .index import IndexSnapshot
from .pruning import (KnnBounds, knn_bounds, knn_threshold, uncertain_region)
from .readings import ReadingStore

ZERO_MASS = 1e-9
_DQ = 9  # decimals used when comparing expansion distances


class ResultSet(Mapping):
    """Object id -> probability, with merge-add and scalar multiplication."""

    def __init__(self, items: Mapping[int, float] | Iterable[tuple[int, float]] = ()):
        self._p: dict[int, float] = {}
        pairs = items.items() if isinstance(items, Mapping) else items
        for o, p in pairs:
            self._p[int(o)] = self._p.get(int(o), 0.0) + float(p)

    def __getitem__(self, obj: int) -> float:
        return self._p[obj]

    def __iter__(self):
        return iter(sorted(self._p))

    def __len__(self) -> int:
        return len(self._p)

    def __add__(self, other: "ResultSet") -> "ResultSet":
        out = ResultSet(self._p)
        for o, p in other._p.items():
            out._p[o] = out._p.get(o, 0.0) + p
        return out

    def __mul__(self, c: float) -> "ResultSet":
        return ResultSet({o: p * c for o, p in self._p.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, ResultSet):
            return self._p == other._p
        if isinstance(other, Mapping):
            return self._p == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        body = ", ".join(f"({o}, {self._p[o]:g})" for o in self)
        return f"ResultSet({{{body}}})"

    @property
    def objects(self) -> set[int]:
        return set(self._p)

    def total(self) -> float:
        return sum(self._p.values())

    def restrict(self, objects: Iterable[int]) -> "ResultSet":
        keep = set(objects)
        return ResultSet({o: p for o, p in self._p.items() if o in keep})

    def nonzero(self, eps: float = ZERO_MASS) -> "ResultSet":
        return ResultSet({o: p for o, p in self._p.items() if p >= eps})


# --------------------------------------------------------------------------
# snapshot range
# --------------------------------------------------------------------------


def _accumulate(snap: IndexSnapshot, anchors: Iterable[int], allowed=None) -> ResultSet:
    acc: dict[int, float] = {}
    for a in anchors:
        for o, p in snap.by_anchor.get(int(a), ()):
            if allowed is None or o in allowed:
                acc[o] = acc.get(o, 0.0) + p
    return ResultSet(acc)


def range_query(q: Rect, snap: IndexSnapshot, grid: AnchorGrid, plan: FloorPlan | None = None,
                objects: Iterable[int] | None = None) -> ResultSet:
    """Sum indexed mass over the query's cells, scaled by each cell's coverage ratio."""
    cells = decompose_range(grid, plan or grid.graph.plan, q)
    allowed = None if objects is None else set(objects)
    result = ResultSet()
    for cell in cells:
        result = result + _accumulate(snap, cell.anchors, allowed) * cell.ratio
    return result


def weighted_query(weights: np.ndarray, snap: IndexSnapshot, objects: Iterable[int] | None = None) -> ResultSet:
    """Range evaluation from a precomputed per-anchor multiplier."""
    acc: dict[int, float] = {}
    objs = snap.by_object if objects is None else {o: snap.by_object[o] for o in objects if o in snap.by_object}
    for o in sorted(objs):
        s = 0.0
        for a, p in objs[o]:
            w = weights[a]
            if w:
                s += p * w
        if s > 0:
            acc[o] = s
    return ResultSet(acc)


# --------------------------------------------------------------------------
# snapshot kNN
# --------------------------------------------------------------------------


@dataclass
class KnnResult:
    result: ResultSet
    exhausted: bool
    visited: list[tuple[int, float]] = field(default_factory=list)  # (anchor, distance) in order

    @property
    def objects(self) -> set[int]:
        return self.result.objects


def _edge_entries(grid: AnchorGrid, e: int):
    lo, hi = int(grid.edge_ptr[e]), int(grid.edge_ptr[e + 1])
    return range(lo, hi), grid.offset[lo:hi]


def expand_anchors(grid: AnchorGrid, q: GraphLocation):
    """Yield (anchor, network distance) in nondecreasing distance, ties by anchor id.

    Label-setting search over nodes and anchors: settling a node releases the
    anchors of its incident edges and the room anchors behind its doors.
    """
    g = grid.graph
    heap: list[tuple[float, int, int, float]] = []  # (rounded d, kind, id, d); kind 0 node, 1 anchor
    done_anchor = set()
    done_node = set()

    def push_anchor(a, d):
        if a not in done_anchor:
            heapq.heappush(heap, (round(d, _DQ), 1, a, d))

    def push_node(n, d):
        if n not in done_node:
            heapq.heappush(heap, (round(d, _DQ), 0, n, d))

    if q.is_room:
        push_anchor(grid.room_anchor(q.room), 0.0)
        for n in g.room_door_nodes[q.room]:
            push_node(int(n), 0.0)
    else:
        ids, offs = _edge_entries(grid, q.edge)
        for a, o in zip(ids, offs):
            push_anchor(a, abs(float(o) - q.offset))
        push_node(int(g.edge_u[q.edge]), q.offset)
        push_node(int(g.edge_v[q.edge]), float(g.edge_len[q.edge]) - q.offset)

    while heap:
        _, kind, i, d = heapq.heappop(heap)
        if kind == 1:
            if i in done_anchor:
                continue
            done_anchor.add(i)
            yield i, d
            continue
        if i in done_node:
            continue
        done_node.add(i)
        for rid in g.room_attachments.get(i, []):
            push_anchor(grid.room_anchor(rid), d)
        for e in g.incident_edges(i):
            e = int(e)
            at_u = g.edge_u[e] == i
            L = float(g.edge_len[e])
            ids, offs = _edge_entries(grid, e)
            for a, o in zip(ids, offs):
                push_anchor(a, d + (float(o) if at_u else L - float(o)))
            push_node(int(g.other_end(e, i)), d + L)


def knn_query(q: GraphLocation | tuple[float, float], k: int, snap: IndexSnapshot, grid: AnchorGrid,
              objects: Iterable[int] | None = None, record: bool = False) -> KnnResult:
    """Accumulate indexed mass anchor by anchor outward from ``q`` until it reaches ``k``.

    Per-object probability is capped at 1. If the search runs out of anchors
    first, everything found is returned with ``exhausted`` set.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if not isinstance(q, GraphLocation):
        q = project_to_graph(grid.graph, q)
    allowed = None if objects is None else set(objects)
    acc: dict[int, float] = {}
    total = 0.0
    visited = []
    remaining = sum(1 for o in snap.by_object if allowed is None or o in allowed)
    if remaining == 0:
        return KnnResult(ResultSet(), True, visited)
    for a, d in expand_anchors(grid, q):
        if record:
            visited.append((a, d))
        for o, p in snap.by_anchor.get(a, ()):
            if allowed is not None and o not in allowed:
                continue
            old = acc.get(o, 0.0)
            new = min(1.0, old + p)
            acc[o] = new
            total += new - old
        if total >= k - 1e-12:
            return KnnResult(ResultSet(acc), False, visited)
    return KnnResult(ResultSet(acc), True, visited)


# --------------------------------------------------------------------------
# critical devices
# --------------------------------------------------------------------------


@dataclass
class CriticalDeviceSet:
    """Readers bounding a monitored part of the walking graph.

    ``region`` holds (edge, lo, hi) intervals and ``rooms`` the rooms whose
    doors open onto it. ``inner`` lists readers inside the region.
    """

    devices: set[int]
    inner: set[int]
    region: list[tuple[int, float, float]]
    rooms: set[int]

    def region_anchors(self, grid: AnchorGrid) -> np.ndarray:
        out = []
        for e, lo, hi in self.region:
            ids, offs = _edge_entries(grid, e)
            out.extend(a for a, o in zip(ids, offs) if lo - 1e-9 <= o <= hi + 1e-9)
        out.extend(grid.room_anchor(r) for r in self.rooms)
        return np.unique(np.array(out, dtype=np.int64))


def map_range_to_graph(grid: AnchorGrid, q: Rect) -> list[tuple[int, float, float]]:
    """Edge intervals a query maps onto.

    A query inside rooms maps to their door points; one touching hallways maps
    to the covered centerline stretches, each end pushed out to the door of
    any touched room lying beyond it so the mapped segment is the longest.
    """
    g = grid.graph
    plan = g.plan
    x0, y0, x1, y1 = q.bounds
    touched_rooms = [r for r in sorted(plan.rooms, key=lambda r: r.id)
                     if min(x1, r.rect[2]) > max(x0, r.rect[0]) and min(y1, r.rect[3]) > max(y0, r.rect[1])]
    door_pos: dict[int, list[float]] = {}
    for r in touched_rooms:
        for d in r.doors:
            door = plan.door_by_id[d]
            door_pos.setdefault(door.hallway_id, []).append(door.position)
    spans: dict[int, tuple[float, float]] = {}
    for h in sorted(plan.hallways, key=lambda h: h.id):
        hx0, hy0, hx1, hy1 = h.rect
        if min(x1, hx1) <= max(x0, hx0) or min(y1, hy1) <= max(y0, hy0):
            continue
        a0 = h.x0 if h.horizontal else h.y0
        a1 = h.x1 if h.horizontal else h.y1
        s = 1.0 if a1 >= a0 else -1.0
        lo_c, hi_c = (x0, x1) if h.horizontal else (y0, y1)
        p = sorted([min(max((lo_c - a0) * s, 0.0), h.length), min(max((hi_c - a0) * s, 0.0), h.length)])
        spans[h.id] = (p[0], p[1])
    for hid, ps in door_pos.items():
        lo, hi = spans.get(hid, (min(ps), max(ps)))
        spans[hid] = (min(lo, *ps), max(hi, *ps))
    out = []
    for hid, (lo, hi) in sorted(spans.items()):
        h = plan.hallway_by_id[hid]
        for e in g.edges_of_hallway(hid):
            e = int(e)
            pu = _hall_pos(h, g.node_xy[g.edge_u[e]])
            pv = _hall_pos(h, g.node_xy[g.edge_v[e]])
            elo, ehi = min(pu, pv), max(pu, pv)
            a, b = max(lo, elo), min(hi, ehi)
            if a <= b + 1e-12:
                # hallway positions increase along the edge when u comes first
                if pu <= pv:
                    out.append((e, a - pu, b - pu))
                else:
                    out.append((e, pu - b, pu - a))
    return out


def _hall_pos(h, xy) -> float:
    return math.hypot(xy[0] - h.x0, xy[1] - h.y0)


def flood_critical_devices(grid: AnchorGrid, seeds: list[tuple[int, float, float]],
                           min_reach: float = 0.0) -> CriticalDeviceSet:
    """Grow a region from ``seeds`` along the graph until readers or dead ends.

    Readers met within ``min_reach`` of the seeds, or overlapping the seeds,
    are passed through and reported as inner; the first reader met beyond it
    on every path becomes a critical device.
    """
    g = grid.graph
    cov_by_edge: dict[int, list[tuple[int, float, float]]] = {}
    for r in g.readers:
        for e, lo, hi in r.coverage:
            cov_by_edge.setdefault(e, []).append((r.id, lo, hi))
    region: list[tuple[int, float, float]] = []
    devices, inner, rooms = set(), set(), set()
    seen: set[tuple[int, int]] = set()
    heap: list[tuple[float, int, float, int]] = []  # (dist, edge, offset, direction)

    def add_rooms_at(node):
        rooms.update(g.room_attachments.get(node, []))

    for e, lo, hi in seeds:
        region.append((e, lo, hi))
        for rid, clo, chi in cov_by_edge.get(e, []):
            if clo <= hi + 1e-9 and chi >= lo - 1e-9:
                inner.add(rid)
        L = float(g.edge_len[e])
        for off, node in ((lo, int(g.edge_u[e])), (hi, int(g.edge_v[e]))):
            if abs(off - (0.0 if node == g.edge_u[e] else L)) <= 1e-9:
                add_rooms_at(node)
        heapq.heappush(heap, (0.0, e, hi, 1))
        heapq.heappush(heap, (0.0, e, lo, -1))

    while heap:
        dist, e, off, direction = heapq.heappop(heap)
        L = float(g.edge_len[e])
        end = L if direction > 0 else 0.0
        block = None
        for rid, clo, chi in sorted(cov_by_edge.get(e, []), key=lambda c: c[1] * direction):
            if direction > 0:
                if chi < off - 1e-9:
                    continue
                start = max(clo, off)
            else:
                if clo > off + 1e-9:
                    continue
                start = min(chi, off)
            if rid in inner and rid not in devices:
                continue
            d_start = dist + abs(start - off)
            ahead = (clo > off + 1e-9) if direction > 0 else (chi < off - 1e-9)
            if not ahead and dist == 0.0:
                inner.add(rid)
                continue
            if d_start < min_reach:
                inner.add(rid)
                continue
            if block is None or abs(start - off) < abs(block[1] - off):
                block = (rid, start)
        if block is not None:
            devices.add(block[0])
            region.append((e, min(off, block[1]), max(off, block[1])))
            continue
        region.append((e, min(off, end), max(off, end)))
        node = int(g.edge_v[e] if direction > 0 else g.edge_u[e])
        add_rooms_at(node)
        d_node = dist + abs(end - off)
        for e2 in g.incident_edges(node):
            e2 = int(e2)
            if e2 == e:
                continue
            key = (e2, node)
            if key in seen:
                continue
            seen.add(key)
            fwd = g.edge_u[e2] == node
            heapq.heappush(heap, (d_node, e2, 0.0 if fwd else float(g.edge_len[e2]), 1 if fwd else -1))
    inner -= devices
    return CriticalDeviceSet(devices, inner, _merge_intervals(region), rooms)


def _merge_intervals(iv: list[tuple[int, float, float]]) -> list[tuple[int, float, float]]:
    by_edge: dict[int, list[tuple[float, float]]] = {}
    for e, lo, hi in iv:
        by_edge.setdefault(e, []).append((lo, hi))
    out = []
    for e in sorted(by_edge):
        cur = None
        for lo, hi in sorted(by_edge[e]):
            if cur and lo <= cur[1] + 1e-9:
                cur = (cur[0], max(cur[1], hi))
            else:
                if cur:
                    out.append((e, *cur))
                cur = (lo, hi)
        out.append((e, *cur))
    return out


def critical_devices_for_range(q: Rect, grid: AnchorGrid) -> CriticalDeviceSet:
    return flood_critical_devices(grid, map_range_to_graph(grid, q))


def critical_devices_for_knn(q: GraphLocation, reach: float, grid: AnchorGrid) -> CriticalDeviceSet:
    """Region around ``q`` extending at least ``reach`` before stopping at readers."""
    if q.is_room:
        seeds = [(int(e), 0.0 if grid.graph.edge_u[e] == n else float(grid.graph.edge_len[e]),
                  0.0 if grid.graph.edge_u[e] == n else float(grid.graph.edge_len[e]))
                 for n in grid.graph.room_door_nodes[q.room] for e in grid.graph.incident_edges(n)]
    else:
        seeds = [(q.edge, q.offset, q.offset)]
    return flood_critical_devices(grid, seeds, min_reach=reach)


# --------------------------------------------------------------------------
# continuous queries
# --------------------------------------------------------------------------


def _toggle(candidates: set[int], events: Iterable[tuple[int, int]], cds: CriticalDeviceSet,
            store: ReadingStore) -> None:
    """Apply critical-device ENTER events to a candidate set in place.

    A detected non-candidate is added. A detected candidate is departing and
    removed, unless the device it was seen at just before lies outside the
    monitored region: then it is coming back in and stays.
    """
    watched = cds.devices | cds.inner
    for obj, reader in events:
        if reader in cds.devices:
            if obj not in candidates:
                candidates.add(obj)
                continue
            w = store.aggregated_window(obj)
            prior = w.d1 if w is not None and w.d2 == reader and w.d1 != reader else None
            if prior is None or prior in watched:
                candidates.discard(obj)
        elif reader in cds.inner:
            candidates.add(obj)


def _drop_outside(candidates: set[int], snap: IndexSnapshot, region: set[int]) -> None:
    """Remove candidates whose indexed mass inside ``region`` vanished."""
    for obj in sorted(candidates):
        entries = snap.by_object.get(obj)
        if entries is None:
            continue  # no belief yet: the filter will produce one
        if sum(p for a, p in entries if a in region) < ZERO_MASS:
            candidates.discard(obj)


class ContinuousRangeQuery:
    """Candidate maintenance for a registered range query.

    Detections by a critical device toggle membership; candidates whose mass
    inside the monitored region vanishes are dropped. The query's anchor
    multipliers are computed once at registration.
    """

    def __init__(self, qid: int, rect: Rect, grid: AnchorGrid, store: ReadingStore):
        self.qid = qid
        self.rect = rect
        self.grid = grid
        self.store = store
        self.cds = critical_devices_for_range(rect, grid)
        self.weights = anchor_weights(decompose_range(grid, grid.graph.plan, rect), grid.n_anchors)
        self.region = self.cds.region_anchors(grid)
        self.candidates: set[int] = set()
        self.result = ResultSet()

    def register(self) -> set[int]:
        c = set()
        for r in self.cds.devices | self.cds.inner:
            c |= self.store.dto_obj.get(r, set())
        self.candidates = c
        return set(c)

    def apply_events(self, events: Iterable[tuple[int, int]], snap: IndexSnapshot | None = None) -> set[int]:
        """Toggle on critical-device ENTER events, then drop region-less candidates."""
        _toggle(self.candidates, events, self.cds, self.store)
        if snap is not None:
            _drop_outside(self.candidates, snap, self._region_set)
        return set(self.candidates)

    @property
    def _region_set(self) -> set[int]:
        s = self.__dict__.get("_rs")
        if s is None:
            s = self.__dict__["_rs"] = set(int(a) for a in self.region)
        return s

    def evaluate(self, snap: IndexSnapshot) -> ResultSet:
        self.result = weighted_query(self.weights, snap, self.candidates)
        return self.result


class ContinuousKnnQuery:
    """Candidate maintenance for a registered kNN query with ``y`` spare candidates.

    Registration keeps every object within the ``(k+y)``-th smallest upper
    bound, grows the monitored region until it encloses their uncertain
    regions, and adds every object last seen by a device of that region.
    """

    def __init__(self, qid: int, point: tuple[float, float] | GraphLocation, k: int, y: int,
                 grid: AnchorGrid, store: ReadingStore, u_max: float):
        if k < 1 or y < 0:
            raise ValueError("need k >= 1 and y >= 0")
        self.qid = qid
        self.grid = grid
        self.store = store
        self.q = point if isinstance(point, GraphLocation) else project_to_graph(grid.graph, point)
        self.k, self.y, self.u_max = k, y, u_max
        self.candidates: set[int] = set()
        self.cds = CriticalDeviceSet(set(), set(), [], set())
        self.region: set[int] = set()
        self.recomputations = 0
        self.result = KnnResult(ResultSet(), True)

    def _candidate_bounds(self, t_current: float) -> list[KnnBounds]:
        g = self.grid.graph
        qd = g.distances_from(self.q)
        out = []
        for obj in self.store.objects:
            ur = uncertain_region(self.store, g, obj, t_current, self.u_max)
            if ur is not None:
                out.append(knn_bounds(g, self.q, ur, qd))
        return out

    def register(self, t_current: float) -> set[int]:
        bounds = self._candidate_bounds(t_current)
        f = knn_threshold(bounds, self.k + self.y)
        chosen = [b for b in bounds if b.s <= f]
        reach = max((b.l for b in chosen), default=0.0)
        self.cds = critical_devices_for_knn(self.q, reach, self.grid)
        self.region = set(int(a) for a in self.cds.region_anchors(self.grid))
        c = {b.object_id for b in chosen}
        for r in self.cds.devices | self.cds.inner:
            c |= self.store.dto_obj.get(r, set())
        self.candidates = c
        self.recomputations += 1
        return set(c)

    def apply_events(self, events: Iterable[tuple[int, int]], t_current: float,
                     snap: IndexSnapshot | None = None) -> set[int]:
        """Toggle on critical-device events; recompute once fewer than k candidates remain."""
        _toggle(self.candidates, events, self.cds, self.store)
        if snap is not None:
            _drop_outside(self.candidates, snap, self.region)
        if len(self.candidates) < self.k:
            self.register(t_current)
        return set(self.candidates)

    def evaluate(self, snap: IndexSnapshot) -> KnnResult:
        self.result = knn_query(self.q, self.k, snap, self.grid, self.candidates)
        return self.result
