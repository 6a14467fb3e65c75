"""Floor plans, the indoor walking graph and its anchor points.

Hallways are axis-aligned rectangles whose centerlines become the edges of
the walking graph. Rooms hang off door nodes and are only resolved at room
granularity: every room gets one dedicated anchor whose network position is
its door.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_EPS = 1e-9


class FloorPlanError(ValueError):
    pass


class PlanParseError(FloorPlanError):
    """The document does not match the floor-plan schema."""


class PlanValidationError(FloorPlanError):
    """The document parses but violates a geometric invariant."""


class DisconnectedGraphError(PlanValidationError):
    def __init__(self, unreachable):
        self.unreachable = sorted(unreachable)
        super().__init__(f"walking graph is disconnected; unreachable nodes: {self.unreachable}")


# --------------------------------------------------------------------------
# floor plan entities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Hallway:
    id: int
    x0: float
    y0: float
    x1: float
    y1: float
    width: float

    @property
    def horizontal(self) -> bool:
        return self.y0 == self.y1

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def point_at(self, position: float) -> tuple[float, float]:
        t = position / self.length
        return (self.x0 + t * (self.x1 - self.x0), self.y0 + t * (self.y1 - self.y0))

    def axis_coord(self, x: float, y: float) -> float:
        return x if self.horizontal else y

    @property
    def rect(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the walkable strip."""
        h = self.width / 2
        if self.horizontal:
            return (min(self.x0, self.x1), self.y0 - h, max(self.x0, self.x1), self.y0 + h)
        return (self.x0 - h, min(self.y0, self.y1), self.x0 + h, max(self.y0, self.y1))


@dataclass(frozen=True)
class Room:
    id: int
    x: float
    y: float
    w: float
    h: float
    doors: tuple[int, ...]

    @property
    def rect(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)


@dataclass(frozen=True)
class Door:
    id: int
    room_id: int
    hallway_id: int
    position: float


@dataclass(frozen=True)
class ReaderSpec:
    id: int
    hallway_id: int
    position: float
    activation_range: float


@dataclass
class FloorPlan:
    hallways: list[Hallway]
    rooms: list[Room]
    doors: list[Door]
    readers: list[ReaderSpec]
    name: str = ""

    def __post_init__(self):
        self.hallway_by_id = {h.id: h for h in self.hallways}
        self.room_by_id = {r.id: r for r in self.rooms}
        self.door_by_id = {d.id: d for d in self.doors}
        self.reader_by_id = {r.id: r for r in self.readers}

    @property
    def extent(self) -> tuple[float, float, float, float]:
        rects = [h.rect for h in self.hallways] + [r.rect for r in self.rooms]
        return (
            min(r[0] for r in rects),
            min(r[1] for r in rects),
            max(r[2] for r in rects),
            max(r[3] for r in rects),
        )

    def door_point(self, door: Door) -> tuple[float, float]:
        return self.hallway_by_id[door.hallway_id].point_at(door.position)

    def reader_point(self, reader: ReaderSpec) -> tuple[float, float]:
        return self.hallway_by_id[reader.hallway_id].point_at(reader.position)

    def with_activation_range(self, activation_range: float) -> "FloorPlan":
        readers = [
            ReaderSpec(r.id, r.hallway_id, r.position, activation_range) for r in self.readers
        ]
        return FloorPlan(list(self.hallways), list(self.rooms), list(self.doors), readers, self.name)


def _require(entry: dict, key: str, kind: str):
    if key not in entry:
        raise PlanParseError(f"{kind} {entry.get('id', '?')}: missing field '{key}'")
    return entry[key]


def _num(entry: dict, key: str, kind: str) -> float:
    value = _require(entry, key, kind)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PlanParseError(f"{kind} {entry.get('id', '?')}: field '{key}' must be a number")
    return float(value)


def _ident(entry: dict, kind: str) -> int:
    value = _require(entry, "id", kind)
    if isinstance(value, bool) or not isinstance(value, int):
        raise PlanParseError(f"{kind} id {value!r} must be an integer")
    return value


def parse_floorplan(doc: dict) -> FloorPlan:
    """Build a validated FloorPlan from an already-decoded document."""
    if not isinstance(doc, dict):
        raise PlanParseError("floor plan document must be a mapping")
    for key in ("hallways", "rooms", "doors", "readers"):
        if not isinstance(doc.get(key), list):
            raise PlanParseError(f"top-level key '{key}' must be a list")

    hallways = [
        Hallway(_ident(h, "hallway"), _num(h, "x0", "hallway"), _num(h, "y0", "hallway"),
                _num(h, "x1", "hallway"), _num(h, "y1", "hallway"), _num(h, "width", "hallway"))
        for h in doc["hallways"]
    ]
    rooms = []
    for r in doc["rooms"]:
        door_ids = _require(r, "doors", "room")
        if not isinstance(door_ids, list):
            raise PlanParseError(f"room {r.get('id')}: 'doors' must be a list")
        rooms.append(Room(_ident(r, "room"), _num(r, "x", "room"), _num(r, "y", "room"),
                          _num(r, "w", "room"), _num(r, "h", "room"), tuple(int(d) for d in door_ids)))
    doors = [
        Door(_ident(d, "door"), int(_require(d, "room_id", "door")),
             int(_require(d, "hallway_id", "door")), _num(d, "position", "door"))
        for d in doc["doors"]
    ]
    readers = [
        ReaderSpec(_ident(r, "reader"), int(_require(r, "hallway_id", "reader")),
                   _num(r, "position", "reader"), _num(r, "activation_range", "reader"))
        for r in doc["readers"]
    ]
    plan = FloorPlan(hallways, rooms, doors, readers, str(doc.get("name", "")))
    validate_floorplan(plan)
    return plan


def validate_floorplan(plan: FloorPlan) -> None:
    for kind, items in (("hallway", plan.hallways), ("room", plan.rooms),
                        ("door", plan.doors), ("reader", plan.readers)):
        ids = [i.id for i in items]
        if len(set(ids)) != len(ids):
            raise PlanValidationError(f"duplicate {kind} ids")
    if not plan.hallways:
        raise PlanValidationError("floor plan has no hallways")
    for h in plan.hallways:
        if h.x0 != h.x1 and h.y0 != h.y1:
            raise PlanValidationError(f"hallway {h.id} is not axis-aligned")
        if h.length <= 0 or h.width <= 0:
            raise PlanValidationError(f"hallway {h.id} is degenerate")
    for r in plan.rooms:
        if r.w <= 0 or r.h <= 0:
            raise PlanValidationError(f"room {r.id} is degenerate")
        if not r.doors:
            raise PlanValidationError(f"room {r.id} has no door")
        for d in r.doors:
            if d not in plan.door_by_id or plan.door_by_id[d].room_id != r.id:
                raise PlanValidationError(f"room {r.id} lists door {d} that does not open into it")
    for d in plan.doors:
        if d.room_id not in plan.room_by_id:
            raise PlanValidationError(f"door {d.id} references unknown room {d.room_id}")
        if d.id not in plan.room_by_id[d.room_id].doors:
            raise PlanValidationError(f"door {d.id} is not listed by room {d.room_id}")
        h = plan.hallway_by_id.get(d.hallway_id)
        if h is None:
            raise PlanValidationError(f"door {d.id} references unknown hallway {d.hallway_id}")
        if not -_EPS <= d.position <= h.length + _EPS:
            raise PlanValidationError(f"door {d.id} lies off hallway {h.id} centerline")
    for r in plan.readers:
        h = plan.hallway_by_id.get(r.hallway_id)
        if h is None:
            raise PlanValidationError(f"reader {r.id} references unknown hallway {r.hallway_id}")
        if not -_EPS <= r.position <= h.length + _EPS:
            raise PlanValidationError(f"reader {r.id} lies off hallway {h.id} centerline")
        if r.activation_range <= 0:
            raise PlanValidationError(f"reader {r.id} has non-positive activation range")


def load_floorplan(source: str | Path | dict) -> FloorPlan:
    """Load a floor plan from a JSON document, a path to one, or a decoded dict."""
    if isinstance(source, dict):
        return parse_floorplan(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    else:
        text = source
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanParseError(f"floor plan is not valid JSON: {exc}") from exc
    return parse_floorplan(doc)


def bundled_plan_path() -> Path:
    return Path(str(resources.files("indoorq") / "data" / "office_floor.json"))


def load_bundled_plan() -> FloorPlan:
    return load_floorplan(bundled_plan_path())


# --------------------------------------------------------------------------
# walking graph
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphLocation:
    """A point on an edge (``edge``, ``offset`` from its first endpoint) or a room."""

    edge: int = -1
    offset: float = 0.0
    room: int | None = None

    @classmethod
    def in_room(cls, room_id: int) -> "GraphLocation":
        return cls(-1, 0.0, room_id)

    @property
    def is_room(self) -> bool:
        return self.room is not None


@dataclass
class Reader:
    """A reader resolved against the walking graph."""

    id: int
    index: int
    point: tuple[float, float]
    location: GraphLocation
    activation_range: float
    coverage: list[tuple[int, float, float]]  # (edge, lo, hi) offsets within range
    net_reach: float = 0.0  # max network distance from the reader to covered points

    @property
    def covered_length(self) -> float:
        return sum(hi - lo for _, lo, hi in self.coverage)


def _segment_circle(ax, ay, bx, by, cx, cy, r) -> tuple[float, float] | None:
    """Offsets along segment a->b whose points lie within distance r of c."""
    dx, dy = bx - ax, by - ay
    length = math.hypot(dx, dy)
    ux, uy = dx / length, dy / length
    # project centre, solve |a + t u - c|^2 <= r^2
    t0 = (cx - ax) * ux + (cy - ay) * uy
    perp2 = (cx - ax) ** 2 + (cy - ay) ** 2 - t0 * t0
    disc = r * r - perp2
    if disc < 0:
        return None
    half = math.sqrt(disc)
    lo, hi = max(0.0, t0 - half), min(length, t0 + half)
    if hi < lo:
        return None
    return (lo, hi)


class WalkingGraph:
    """Nodes and edges abstracted from hallway centerlines.

    Node ids follow lexicographic (x, y) order of the node coordinates and edges
    are oriented from their lower-id endpoint, so identical plans always give
    identical graphs.
    """

    def __init__(self, plan: FloorPlan, node_xy: np.ndarray, edges: list[tuple[int, int, int]]):
        self.plan = plan
        self.node_xy = node_xy
        self.n_nodes = len(node_xy)
        self.edge_u = np.array([e[0] for e in edges], dtype=np.int64)
        self.edge_v = np.array([e[1] for e in edges], dtype=np.int64)
        self.edge_hallway = np.array([e[2] for e in edges], dtype=np.int64)
        self.edge_len = np.hypot(*(node_xy[self.edge_v] - node_xy[self.edge_u]).T)
        self.n_edges = len(edges)

        incident: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e in range(self.n_edges):
            incident[self.edge_u[e]].append(e)
            incident[self.edge_v[e]].append(e)
        self.node_ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        self.node_ptr[1:] = np.cumsum([len(i) for i in incident])
        self.node_edges = np.array([e for inc in incident for e in inc], dtype=np.int64)
        self.degree = np.diff(self.node_ptr)

        # rooms: dense index in id order, attached at their door nodes
        self.room_ids = sorted(r.id for r in plan.rooms)
        self.room_index = {rid: i for i, rid in enumerate(self.room_ids)}
        self._node_of_point = {self._key(*xy): i for i, xy in enumerate(node_xy)}
        self.door_node = {d.id: self._node_of_point[self._key(*plan.door_point(d))] for d in plan.doors}
        self.room_door_nodes = {
            r.id: sorted({self.door_node[d] for d in r.doors}) for r in plan.rooms
        }
        self.room_attachments: dict[int, list[int]] = {}
        for rid, nodes in self.room_door_nodes.items():
            for n in nodes:
                self.room_attachments.setdefault(n, []).append(rid)
        node_rooms = [sorted(self.room_index[r] for r in self.room_attachments.get(n, []))
                      for n in range(self.n_nodes)]
        self.node_room_ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        self.node_room_ptr[1:] = np.cumsum([len(x) for x in node_rooms])
        self.node_rooms = np.array([r for x in node_rooms for r in x], dtype=np.int64)
        room_nodes = [self.room_door_nodes[rid] for rid in self.room_ids]
        self.room_node_ptr = np.zeros(len(room_nodes) + 1, dtype=np.int64)
        self.room_node_ptr[1:] = np.cumsum([len(x) for x in room_nodes])
        self.room_nodes = np.array([n for x in room_nodes for n in x], dtype=np.int64)

        self._check_connected()
        self.node_dist = self._all_pairs()
        self.readers = self._resolve_readers()
        self.reader_index = {r.id: r.index for r in self.readers}

    @staticmethod
    def _key(x: float, y: float) -> tuple[float, float]:
        return (round(x, 9) + 0.0, round(y, 9) + 0.0)

    # -- structure ---------------------------------------------------------

    def incident_edges(self, node: int) -> np.ndarray:
        return self.node_edges[self.node_ptr[node]:self.node_ptr[node + 1]]

    def other_end(self, edge: int, node: int) -> int:
        return int(self.edge_v[edge] if self.edge_u[edge] == node else self.edge_u[edge])

    def neighbors(self, node: int) -> list[tuple[int, int, float]]:
        """(neighbor, edge, length) triples."""
        return [(self.other_end(e, node), int(e), float(self.edge_len[e]))
                for e in self.incident_edges(node)]

    def edges_of_hallway(self, hallway_id: int) -> np.ndarray:
        return np.flatnonzero(self.edge_hallway == hallway_id)

    def _check_connected(self) -> None:
        seen = {0}
        stack = [0]
        while stack:
            n = stack.pop()
            for m, _, _ in self.neighbors(n):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if len(seen) != self.n_nodes:
            raise DisconnectedGraphError(set(range(self.n_nodes)) - seen)

    def _dijkstra(self, source: int) -> np.ndarray:
        dist = np.full(self.n_nodes, np.inf)
        dist[source] = 0.0
        heap = [(0.0, source)]
        done = np.zeros(self.n_nodes, dtype=bool)
        while heap:
            d, n = heapq.heappop(heap)
            if done[n]:
                continue
            done[n] = True
            for m, _, w in self.neighbors(n):
                nd = d + w
                if nd < dist[m]:
                    dist[m] = nd
                    heapq.heappush(heap, (nd, m))
        return dist

    def _all_pairs(self) -> np.ndarray:
        return np.vstack([self._dijkstra(s) for s in range(self.n_nodes)])

    # -- locations -----------------------------------------------------------

    def point_of(self, loc: GraphLocation) -> tuple[float, float]:
        if loc.is_room:
            return self.plan.room_by_id[loc.room].center
        a = self.node_xy[self.edge_u[loc.edge]]
        b = self.node_xy[self.edge_v[loc.edge]]
        t = loc.offset / self.edge_len[loc.edge]
        return (float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1])))

    def anchors_of(self, loc: GraphLocation) -> list[tuple[int, float]]:
        """Graph nodes a location hangs off, with the distance to each."""
        if loc.is_room:
            return [(n, 0.0) for n in self.room_door_nodes[loc.room]]
        e = loc.edge
        return [(int(self.edge_u[e]), loc.offset), (int(self.edge_v[e]), float(self.edge_len[e]) - loc.offset)]

    def distances_from(self, loc: GraphLocation) -> np.ndarray:
        """Network distance from ``loc`` to every node."""
        ends = self.anchors_of(loc)
        return np.min(np.vstack([d + self.node_dist[n] for n, d in ends]), axis=0)

    def location_distance(self, a: GraphLocation, b: GraphLocation) -> float:
        if a.is_room and b.is_room and a.room == b.room:
            return 0.0
        best = math.inf
        for na, da in self.anchors_of(a):
            for nb, db in self.anchors_of(b):
                best = min(best, da + self.node_dist[na, nb] + db)
        if not a.is_room and not b.is_room and a.edge == b.edge:
            best = min(best, abs(a.offset - b.offset))
        return float(best)

    def _resolve_readers(self) -> list[Reader]:
        out = []
        for idx, spec in enumerate(sorted(self.plan.readers, key=lambda r: r.id)):
            pt = self.plan.reader_point(spec)
            loc = self._locate_on_hallway(spec.hallway_id, pt)
            cov = []
            for e in range(self.n_edges):
                a = self.node_xy[self.edge_u[e]]
                b = self.node_xy[self.edge_v[e]]
                iv = _segment_circle(a[0], a[1], b[0], b[1], pt[0], pt[1], spec.activation_range)
                if iv is not None and iv[1] - iv[0] > 0:
                    cov.append((e, iv[0], iv[1]))
            reader = Reader(spec.id, idx, pt, loc, spec.activation_range, cov)
            reader.net_reach = self._max_distance_over(loc, cov)
            out.append(reader)
        return out

    def _max_distance_over(self, loc: GraphLocation, intervals) -> float:
        dn = self.distances_from(loc)
        best = 0.0
        for e, lo, hi in intervals:
            du, dv, L = dn[self.edge_u[e]], dn[self.edge_v[e]], self.edge_len[e]
            cands = [lo, hi, (dv + L - du) / 2]
            for x in cands:
                if lo - _EPS <= x <= hi + _EPS:
                    d = min(du + x, dv + L - x)
                    if not loc.is_room and e == loc.edge:
                        d = min(d, abs(x - loc.offset))
                    best = max(best, d)
        return float(best)

    def _locate_on_hallway(self, hallway_id: int, pt) -> GraphLocation:
        best = None
        for e in self.edges_of_hallway(hallway_id):
            loc, d = self._project_edge(int(e), pt)
            if best is None or d < best[1] - 1e-12:
                best = (loc, d)
        return best[0]

    def _project_edge(self, e: int, p) -> tuple[GraphLocation, float]:
        a = self.node_xy[self.edge_u[e]]
        b = self.node_xy[self.edge_v[e]]
        L = self.edge_len[e]
        t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (L * L)
        t = min(1.0, max(0.0, t))
        q = a + t * (b - a)
        return GraphLocation(e, float(t * L)), float(math.hypot(p[0] - q[0], p[1] - q[1]))

    def reader_covers(self, reader_index: int, loc: GraphLocation) -> bool:
        if loc.is_room:
            return False
        return any(e == loc.edge and lo - _EPS <= loc.offset <= hi + _EPS
                   for e, lo, hi in self.readers[reader_index].coverage)

    def covering_readers(self, loc: GraphLocation) -> list[int]:
        return [r.index for r in self.readers if self.reader_covers(r.index, loc)]


def build_walking_graph(plan: FloorPlan) -> WalkingGraph:
    """Turn hallway centerlines into graph edges.

    Nodes are hallway ends, centerline crossings and door projections.
    """
    key = WalkingGraph._key
    per_hallway: dict[int, set] = {}
    for h in plan.hallways:
        pts = {key(h.x0, h.y0), key(h.x1, h.y1)}
        for g in plan.hallways:
            if g.id == h.id:
                continue
            x = _crossing(h, g)
            if x is not None:
                pts.add(key(*x))
        per_hallway[h.id] = pts
    for d in plan.doors:
        per_hallway[d.hallway_id].add(key(*plan.door_point(d)))

    coords = sorted({p for pts in per_hallway.values() for p in pts})
    node_id = {p: i for i, p in enumerate(coords)}
    edges = set()
    for h in plan.hallways:
        pts = sorted(per_hallway[h.id], key=lambda p: h.axis_coord(*p))
        for p, q in zip(pts, pts[1:]):
            a, b = node_id[p], node_id[q]
            if a == b:
                continue
            edges.add((min(a, b), max(a, b), h.id))
    seen_pairs: dict[tuple[int, int], int] = {}
    for a, b, hid in sorted(edges):
        if (a, b) in seen_pairs:
            raise PlanValidationError(
                f"hallways {seen_pairs[(a, b)]} and {hid} overlap along a centerline")
        seen_pairs[(a, b)] = hid
    return WalkingGraph(plan, np.array(coords, dtype=float), sorted(edges))


def _crossing(h: Hallway, g: Hallway) -> tuple[float, float] | None:
    """Point where two centerlines meet, if they are perpendicular and touch."""
    if h.horizontal == g.horizontal:
        # collinear hallways may share an endpoint
        for p in ((h.x0, h.y0), (h.x1, h.y1)):
            for q in ((g.x0, g.y0), (g.x1, g.y1)):
                if abs(p[0] - q[0]) < _EPS and abs(p[1] - q[1]) < _EPS:
                    return p
        return None
    hz, vt = (h, g) if h.horizontal else (g, h)
    x, y = vt.x0, hz.y0
    if (min(hz.x0, hz.x1) - _EPS <= x <= max(hz.x0, hz.x1) + _EPS
            and min(vt.y0, vt.y1) - _EPS <= y <= max(vt.y0, vt.y1) + _EPS):
        return (x, y)
    return None


def shortest_network_distance(graph: WalkingGraph, a: GraphLocation, b: GraphLocation) -> float:
    """Shortest path length along the walking graph; ``math.inf`` if unreachable."""
    return graph.location_distance(a, b)


def project_to_graph(graph: WalkingGraph, p: Sequence[float]) -> GraphLocation:
    """Nearest point on any edge; ties go to the lowest edge id."""
    a = graph.node_xy[graph.edge_u]
    b = graph.node_xy[graph.edge_v]
    d = b - a
    L2 = graph.edge_len ** 2
    px, py = float(p[0]), float(p[1])
    t = np.clip(((px - a[:, 0]) * d[:, 0] + (py - a[:, 1]) * d[:, 1]) / L2, 0.0, 1.0)
    qx = a[:, 0] + t * d[:, 0]
    qy = a[:, 1] + t * d[:, 1]
    dist = np.hypot(px - qx, py - qy)
    e = int(np.argmin(dist))
    return GraphLocation(e, float(t[e] * graph.edge_len[e]))


# --------------------------------------------------------------------------
# anchor points
# --------------------------------------------------------------------------


def edge_anchor_offsets(length: float, spacing: float) -> np.ndarray:
    """Offsets 0, s, 2s, ... plus the far endpoint when the last gap is short."""
    n = int(math.floor(length / spacing + _EPS))
    offs = [k * spacing for k in range(n + 1)]
    if length - offs[-1] > _EPS:
        offs.append(length)
    else:
        offs[-1] = length
    return np.array(offs, dtype=float)


@dataclass
class AnchorGrid:
    """Anchor points laid along every edge, plus one anchor per room.

    Edge anchors are numbered edge by edge in offset order, so the anchors of
    edge ``e`` are ``edge_ptr[e]:edge_ptr[e + 1]``. Room anchors follow, one per
    room in room-id order; their ``edge`` is -1 and ``room`` holds the room id.
    """

    graph: WalkingGraph
    spacing: float
    edge: np.ndarray
    offset: np.ndarray
    xy: np.ndarray
    room: np.ndarray
    edge_ptr: np.ndarray
    room_anchor_map: dict[int, list[int]] = field(default_factory=dict)

    @property
    def n_anchors(self) -> int:
        return len(self.edge)

    @property
    def n_edge_anchors(self) -> int:
        return int(self.edge_ptr[-1])

    def location(self, aid: int) -> GraphLocation:
        if self.room[aid] >= 0:
            return GraphLocation.in_room(int(self.room[aid]))
        return GraphLocation(int(self.edge[aid]), float(self.offset[aid]))

    def room_anchor(self, room_id: int) -> int:
        return self.room_anchor_map[room_id][0]

    def nearest_on_edge(self, edge: int, offset: float) -> int:
        lo, hi = self.edge_ptr[edge], self.edge_ptr[edge + 1]
        offs = self.offset[lo:hi]
        i = int(np.searchsorted(offs, offset))
        if i == 0:
            return int(lo)
        if i >= len(offs):
            return int(hi - 1)
        return int(lo + (i - 1 if offset - offs[i - 1] <= offs[i] - offset else i))

    def nearest_anchor(self, loc: GraphLocation) -> int:
        if loc.is_room:
            return self.room_anchor(loc.room)
        return self.nearest_on_edge(loc.edge, loc.offset)

    def anchor_distances(self, loc: GraphLocation) -> np.ndarray:
        """Network distance from ``loc`` to every anchor."""
        g = self.graph
        dn = g.distances_from(loc)
        n_e = self.n_edge_anchors
        out = np.empty(self.n_anchors)
        e = self.edge[:n_e]
        off = self.offset[:n_e]
        out[:n_e] = np.minimum(dn[g.edge_u[e]] + off, dn[g.edge_v[e]] + g.edge_len[e] - off)
        if not loc.is_room:
            same = e == loc.edge
            out[:n_e][same] = np.minimum(out[:n_e][same], np.abs(off[same] - loc.offset))
        for rid, (aid,) in self.room_anchor_map.items():
            out[aid] = min(dn[n] for n in g.room_door_nodes[rid])
            if loc.is_room and loc.room == rid:
                out[aid] = 0.0
        return out


def generate_anchor_points(graph: WalkingGraph, spacing: float) -> AnchorGrid:
    if spacing <= 0:
        raise ValueError("anchor spacing must be positive")
    edges, offsets, xy = [], [], []
    ptr = [0]
    for e in range(graph.n_edges):
        offs = edge_anchor_offsets(float(graph.edge_len[e]), spacing)
        a = graph.node_xy[graph.edge_u[e]]
        b = graph.node_xy[graph.edge_v[e]]
        t = offs / graph.edge_len[e]
        edges.extend([e] * len(offs))
        offsets.extend(offs)
        xy.extend(np.outer(1 - t, a) + np.outer(t, b))
        ptr.append(ptr[-1] + len(offs))
    rooms = [-1] * len(edges)
    room_map = {}
    for rid in graph.room_ids:
        room_map[rid] = [len(edges)]
        edges.append(-1)
        offsets.append(0.0)
        xy.append(np.array(graph.plan.room_by_id[rid].center))
        rooms.append(rid)
    return AnchorGrid(
        graph=graph,
        spacing=spacing,
        edge=np.array(edges, dtype=np.int64),
        offset=np.array(offsets, dtype=float),
        xy=np.array(xy, dtype=float).reshape(-1, 2),
        room=np.array(rooms, dtype=np.int64),
        edge_ptr=np.array(ptr, dtype=np.int64),
        room_anchor_map=room_map,
    )


# --------------------------------------------------------------------------
# range decomposition
# --------------------------------------------------------------------------

HALLWAY = "HALLWAY"
ROOM = "ROOM"


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.x + self.w, self.y + self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h


@dataclass(frozen=True)
class RangeCell:
    kind: str
    entity: int  # hallway or room id
    anchors: np.ndarray
    ratio: float


def _overlap(a: tuple, b: tuple) -> tuple[float, float, float, float] | None:
    x0, y0 = max(a[0], b[0]), max(a[1], b[1])
    x1, y1 = min(a[2], b[2]), min(a[3], b[3])
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None
    return (x0, y0, x1, y1)


def decompose_range(grid: AnchorGrid, plan: FloorPlan, q: Rect) -> list[RangeCell]:
    """Split a query rectangle into hallway and room cells.

    A hallway cell covers the anchors whose axis coordinate falls inside the
    overlap and scales by the fraction of hallway width that is covered; a room
    cell covers the room anchor and scales by the fraction of room area.
    """
    if q.w <= 0 or q.h <= 0:
        raise ValueError("query rectangle is degenerate")
    qb = q.bounds
    cells = []
    g = grid.graph
    for h in sorted(plan.hallways, key=lambda h: h.id):
        ov = _overlap(qb, h.rect)
        if ov is None:
            continue
        if h.horizontal:
            lo, hi, cross = ov[0], ov[2], ov[3] - ov[1]
            coord = grid.xy[:, 0]
        else:
            lo, hi, cross = ov[1], ov[3], ov[2] - ov[0]
            coord = grid.xy[:, 1]
        on_h = np.isin(grid.edge, g.edges_of_hallway(h.id)) & (grid.room < 0)
        sel = np.flatnonzero(on_h & (coord >= lo - _EPS) & (coord <= hi + _EPS))
        cells.append(RangeCell(HALLWAY, h.id, sel, min(1.0, cross / h.width)))
    for r in sorted(plan.rooms, key=lambda r: r.id):
        ov = _overlap(qb, r.rect)
        if ov is None:
            continue
        area = (ov[2] - ov[0]) * (ov[3] - ov[1])
        cells.append(RangeCell(ROOM, r.id, np.array(grid.room_anchor_map[r.id]),
                               min(1.0, area / r.area)))
    return cells


def anchor_weights(cells: Iterable[RangeCell], n_anchors: int) -> np.ndarray:
    """Per-anchor multiplier a range query applies; 0 outside the query."""
    w = np.zeros(n_anchors)
    for c in cells:
        w[c.anchors] += c.ratio
    return w
