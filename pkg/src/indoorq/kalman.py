"""Kalman-filter location inference along walking-graph routes.

Between the two most recent detecting readers an object is tracked as a 1-D
Gaussian over arc length along each shortest route, with one hypothesis per
number of rooms it may have visited on the way. After the measurement update
at the later reader, the belief is pushed forward along every route leaving
that reader and integrated between consecutive anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .floorplan import AnchorGrid, GraphLocation, WalkingGraph
from .params import FilterParams
from .readings import ReadingStore

_TIE = 1e-6


@dataclass(frozen=True)
class Route:
    """A walk from one graph location to another.

    ``legs`` are (edge, from_offset, to_offset) in travel order; ``nodes`` the
    graph nodes passed through; ``rooms`` the rooms whose doors lie on it.
    """

    legs: tuple[tuple[int, float, float], ...]
    nodes: tuple[int, ...]
    rooms: tuple[int, ...]
    length: float

    @property
    def m(self) -> int:
        return len(self.rooms)

    @property
    def arrival_direction(self) -> int:
        e, a, b = self.legs[-1]
        if a == b and len(self.legs) > 1:
            # ends on the node it entered by: heading into the edge from that end
            return 1 if a == 0.0 else -1
        return 1 if b >= a else -1


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    variance: float
    route: Route | None = None

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def mass(self, lo: float, hi: float) -> float:
        s = self.std
        return float(ndtr((hi - self.mean) / s) - ndtr((lo - self.mean) / s))


@dataclass(frozen=True)
class PathHypothesis:
    route: Route
    rooms_entered: int
    belief: GaussianBelief
    weight: float = 1.0
    feasible: bool = True


# --------------------------------------------------------------------------
# routes
# --------------------------------------------------------------------------


def _route_rooms(graph: WalkingGraph, nodes: Sequence[int]) -> tuple[int, ...]:
    rooms = []
    for n in nodes:
        rooms.extend(graph.room_attachments.get(n, []))
    return tuple(rooms)


def enumerate_paths(graph: WalkingGraph, a: GraphLocation, b: GraphLocation) -> list[Route]:
    """All minimal-length routes from ``a`` to ``b`` (ties within 1e-6 m).

    Both locations must lie on edges. When they coincide the single empty
    route is returned and its rooms are those attached to the nodes of the
    edge the location sits on.
    """
    if a.is_room or b.is_room:
        raise ValueError("routes are enumerated between edge locations")
    if a == b:
        e = a.edge
        nodes = (int(graph.edge_u[e]), int(graph.edge_v[e]))
        return [Route(((e, a.offset, a.offset),), (), _route_rooms(graph, nodes), 0.0)]
    best = graph.location_distance(a, b)
    routes = []
    if a.edge == b.edge and abs(abs(a.offset - b.offset) - best) <= _TIE:
        routes.append(Route(((a.edge, a.offset, b.offset),), (), (), abs(a.offset - b.offset)))
    D = graph.node_dist
    for na, da in graph.anchors_of(a):
        for nb, db in graph.anchors_of(b):
            if abs(da + D[na, nb] + db - best) > _TIE:
                continue
            for nodes in _node_paths(graph, na, nb):
                legs = [(a.edge, a.offset, 0.0 if na == graph.edge_u[a.edge] else float(graph.edge_len[a.edge]))]
                for x, y in zip(nodes, nodes[1:]):
                    e = _edge_between(graph, x, y)
                    fwd = graph.edge_u[e] == x
                    L = float(graph.edge_len[e])
                    legs.append((e, 0.0 if fwd else L, L if fwd else 0.0))
                legs.append((b.edge, 0.0 if nb == graph.edge_u[b.edge] else float(graph.edge_len[b.edge]), b.offset))
                # a route that doubles back over its first or last edge is not simple
                if len(legs) > 2 and (legs[1][0] == a.edge or legs[-2][0] == b.edge):
                    continue
                if len(nodes) == 1 and a.edge == b.edge:
                    continue
                routes.append(Route(tuple(legs), tuple(nodes), _route_rooms(graph, nodes), best))
    uniq = {}
    for r in routes:
        uniq.setdefault(r.legs, r)
    return [uniq[k] for k in sorted(uniq)]


def _edge_between(graph: WalkingGraph, x: int, y: int) -> int:
    best = None
    for m, e, w in graph.neighbors(x):
        if m == y and (best is None or w < graph.edge_len[best]):
            best = e
    return best


def _node_paths(graph: WalkingGraph, src: int, dst: int) -> list[tuple[int, ...]]:
    D = graph.node_dist
    target = D[src, dst]
    out = []

    def walk(path):
        n = path[-1]
        if n == dst:
            out.append(tuple(path))
            return
        for m, e, w in graph.neighbors(n):
            if m not in path and abs(D[src, n] + w + D[m, dst] - target) <= _TIE:
                walk(path + [m])

    walk([src])
    return out


# --------------------------------------------------------------------------
# filter steps
# --------------------------------------------------------------------------


def predict(h: PathHypothesis, t1: float, t2: float, speed_mu: float, speed_sigma: float,
            room_time_mu: float) -> PathHypothesis:
    """Constant-speed prediction, discounting ``rooms_entered`` average room stays."""
    if t2 < t1:
        raise ValueError("prediction goes backwards in time")
    travel = t2 - t1 - h.rooms_entered * room_time_mu
    b = h.belief
    pred = GaussianBelief(b.mean + speed_mu * max(travel, 0.0),
                          b.variance + speed_sigma ** 2 * (t2 - t1), h.route)
    return replace(h, belief=pred, feasible=travel >= 0)


def prune_hypotheses(hyps: Sequence[PathHypothesis], interval: tuple[float, float],
                     tau: float) -> list[PathHypothesis]:
    """Keep hypotheses with at least ``tau`` predicted mass in the reader interval.

    Survivors share probability uniformly. If none survive, the single
    hypothesis with the largest overlap is kept.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    if not hyps:
        return []
    overlap = [h.belief.mass(*interval) if h.feasible else -1.0 for h in hyps]
    keep = [h for h, o in zip(hyps, overlap) if h.feasible and o >= tau]
    if not keep:
        keep = [hyps[int(np.argmax(overlap))]]
    w = 1.0 / len(keep)
    return [replace(h, weight=w) for h in keep]


def kalman_gain(prior_var: float, meas_var: float) -> float:
    return prior_var / (prior_var + meas_var)


def kalman_update(pred: GaussianBelief, z: float, meas_var: float) -> GaussianBelief:
    if not meas_var > 0:
        raise ValueError("measurement variance must be positive")
    k = kalman_gain(pred.variance, meas_var)
    return GaussianBelief(pred.mean + k * (z - pred.mean), pred.variance - k * pred.variance, pred.route)


# --------------------------------------------------------------------------
# anchor discretisation
# --------------------------------------------------------------------------


class _Pieces:
    """Accumulates (anchor, arc_lo, arc_hi, weight) integration pieces."""

    def __init__(self):
        self.anchor, self.lo, self.hi, self.w = [], [], [], []

    def add(self, anchor: int, lo: float, hi: float, w: float) -> None:
        if w > 0 and hi > lo:
            self.anchor.append(anchor)
            self.lo.append(lo)
            self.hi.append(hi)
            self.w.append(w)

    def integrate(self, mean: float, std: float, n_anchors: int) -> np.ndarray:
        if not self.anchor:
            return np.zeros(n_anchors)
        lo = (np.array(self.lo) - mean) / std
        hi = (np.array(self.hi) - mean) / std
        mass = (ndtr(hi) - ndtr(lo)) * np.array(self.w)
        return np.bincount(np.array(self.anchor), weights=mass, minlength=n_anchors)


def _edge_anchors(grid: AnchorGrid, e: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = grid.edge_ptr[e], grid.edge_ptr[e + 1]
    return np.arange(lo, hi), grid.offset[lo:hi]


def _behind_anchor(grid: AnchorGrid, e: int, off: float, direction: int) -> int:
    ids, offs = _edge_anchors(grid, e)
    if direction > 0:
        i = int(np.searchsorted(offs, off + 1e-12, side="right")) - 1
        return int(ids[max(i, 0)])
    i = int(np.searchsorted(offs, off - 1e-12, side="left"))
    return int(ids[min(i, len(ids) - 1)])


def forward_pieces(grid: AnchorGrid, pieces: _Pieces, edge: int, off: float, direction: int,
                   s0: float, weight: float, s_max: float, params: FilterParams,
                   depth: int = 0) -> None:
    """Walk forward from (edge, off) and emit integration pieces.

    Every anchor receives the arc interval up to the next anchor in travel
    direction. At nodes the walk splits: rooms take ``room_entry_prob`` of
    the weight, the remaining hallway branches share the rest uniformly, and
    a dead end turns the walk around. Once past ``s_max`` the last anchor
    absorbs the remaining tail.
    """
    g = grid.graph
    ids, offs = _edge_anchors(grid, edge)
    L = float(g.edge_len[edge])
    current = _behind_anchor(grid, edge, off, direction)
    s_cur = s0
    if direction > 0:
        ahead = [(int(a), s0 + (o - off)) for a, o in zip(ids, offs) if o > off + 1e-12]
    else:
        ahead = [(int(a), s0 + (off - o)) for a, o in zip(ids[::-1], offs[::-1]) if o < off - 1e-12]
    for a, s in ahead:
        if s > s_max:
            pieces.add(current, s_cur, math.inf, weight)
            return
        pieces.add(current, s_cur, s, weight)
        current, s_cur = a, s
    # reached the far node; ``current`` is this edge's node anchor at arc s_cur
    node = int(g.edge_v[edge] if direction > 0 else g.edge_u[edge])
    s_node = s0 + (L - off if direction > 0 else off)
    branch_pieces(grid, pieces, node, edge, current, s_node, weight, s_max, params, depth)


def branch_pieces(grid: AnchorGrid, pieces: _Pieces, node: int, via_edge: int, current: int,
                  s_node: float, weight: float, s_max: float, params: FilterParams,
                  depth: int = 0) -> None:
    """Split a walk standing on ``node`` (arrived by ``via_edge``) over its exits."""
    g = grid.graph
    rooms = g.room_attachments.get(node, [])
    others = [int(e) for e in g.incident_edges(node) if e != via_edge]
    if not others:
        others = [via_edge]  # dead end: turn around
    p_room = params.room_entry_prob if rooms else 0.0
    w_hall = weight * (1.0 - p_room) / len(others)
    if depth > 200 or w_hall < params.min_branch_mass:
        pieces.add(current, s_node, math.inf, weight)
        return
    for rid in rooms:
        pieces.add(grid.room_anchor(rid), s_node, math.inf, weight * p_room / len(rooms))
    for e in others:
        fwd = g.edge_u[e] == node
        forward_pieces(grid, pieces, e, 0.0 if fwd else float(g.edge_len[e]), 1 if fwd else -1,
                       s_node, w_hall, s_max, params, depth + 1)


def route_point(route: Route, s: float) -> tuple[int, float, int]:
    """(edge, offset, direction) at arc ``s`` in [-length, 0] of ``route``.

    Arc 0 is the route's end. A point on a node resolves to the end of the
    leg arriving there, so a forward walk from it branches at that node.
    """
    pos = -route.length
    found = None
    for e, a, b in route.legs:
        n = abs(b - a)
        if n <= 0:
            continue
        sign = 1 if b > a else -1
        found = (e, a + sign * min(n, max(0.0, s - pos)), sign)
        if pos + n >= s - 1e-12:
            break
        pos += n
    if found is None:
        e, a, _ = route.legs[-1]
        found = (e, a, route.arrival_direction)
    return found


def backward_pieces(grid: AnchorGrid, pieces: _Pieces, route: Route, weight: float,
                    s_min: float, s_end: float = 0.0) -> None:
    """Pieces for arc < ``s_end``, i.e. the stretch of ``route`` already walked.

    Arc 0 is the route's end; anchors along the route get the interval up to
    the next anchor towards the end, and the first anchor absorbs the tail.
    """
    pts = []
    s = -route.length
    for e, a, b in route.legs:
        ids, offs = _edge_anchors(grid, e)
        lo, hi = min(a, b), max(a, b)
        for aid, o in zip(ids, offs):
            if lo - 1e-12 <= o <= hi + 1e-12:
                pts.append((s + abs(o - a), int(aid)))
        s += abs(b - a)
    end_edge, end_off, direction = route_point(route, s_end)
    last = _behind_anchor(grid, end_edge, end_off, direction)
    pts = sorted({(round(p, 12), a) for p, a in pts if p <= s_end + 1e-12 and a != last})
    pts.append((s_end - abs(end_off - float(grid.offset[last])), last))
    pts.sort()
    for i, (s_i, a) in enumerate(pts):
        s_next = pts[i + 1][0] if i + 1 < len(pts) else s_end
        lo = -math.inf if i == 0 or s_i < s_min else s_i
        if s_next < s_min:
            continue
        pieces.add(a, lo, s_next, weight)


def _single_device_pieces(grid: AnchorGrid, pieces: _Pieces, loc: GraphLocation, s_max: float,
                          params: FilterParams) -> None:
    for direction in (1, -1):
        behind = _behind_anchor(grid, loc.edge, loc.offset, direction)
        pieces.add(behind, -math.inf, 0.0, 0.5)
        forward_pieces(grid, pieces, loc.edge, loc.offset, direction, 0.0, 0.5, s_max, params)


def travel_interval(win) -> tuple[int, int]:
    """Last second at d1 and the first second at d2 after it.

    Seconds spent inside either range are not travel between the readers.
    """
    t_leave = max(e.second for e in win.entries if e.reader_id == win.d1)
    t_arrive = min(e.second for e in win.entries if e.reader_id == win.d2 and e.second > t_leave)
    return t_leave, t_arrive


def returned_to_d2(win) -> bool:
    """True when d2's readings since arrival are not one unbroken run.

    A silent second inside the run means the object may have left the range
    and come back, so the heading it arrived with says little.
    """
    if win.d1 == win.d2:
        return False
    _, t_arrive = travel_interval(win)
    secs = sorted(e.second for e in win.entries if e.second >= t_arrive)
    return secs[-1] - secs[0] != len(secs) - 1


@dataclass
class KalmanResult:
    hypotheses: list[PathHypothesis]
    posterior: GaussianBelief | None
    forward: GaussianBelief
    masses: np.ndarray


def kalman_object(store: ReadingStore, grid: AnchorGrid, obj: int, t_current: int,
                  params: FilterParams = FilterParams()) -> KalmanResult | None:
    """Full Kalman pass for one object; returns per-anchor probabilities."""
    g = grid.graph
    win = store.aggregated_window(obj)
    if win is None:
        return None
    r1 = g.readers[g.reader_index[win.d1]]
    r2 = g.readers[g.reader_index[win.d2]]
    t_min = min(win.t2 + params.horizon, int(t_current))
    dt_fwd = max(t_min - win.t2, 0)
    pieces = _Pieces()

    if win.d1 == win.d2 or returned_to_d2(win):
        # no usable heading: spread both ways from the reader
        var = r2.activation_range + params.speed_sigma ** 2 * dt_fwd
        fwd = GaussianBelief(params.speed_mu * dt_fwd, var)
        _single_device_pieces(grid, pieces, r2.location, fwd.mean + 6 * fwd.std, params)
        return KalmanResult([], None, fwd, pieces.integrate(fwd.mean, fwd.std, grid.n_anchors))

    t_leave, t_arrive = travel_interval(win)
    routes = enumerate_paths(g, r1.location, r2.location)
    hyps = []
    for route in routes:
        prior = GaussianBelief(0.0, r1.activation_range, route)
        for j in range(route.m + 1):
            h = PathHypothesis(route, j, prior)
            hyps.append(predict(h, t_leave, t_arrive, params.speed_mu, params.speed_sigma,
                                params.room_time_mu))
    L = routes[0].length
    interval = (L - r2.activation_range, L + r2.activation_range)
    kept = prune_hypotheses(hyps, interval, params.tau)
    avg = GaussianBelief(float(np.mean([h.belief.mean for h in kept])),
                         float(np.mean([h.belief.variance for h in kept])))
    post = kalman_update(avg, L, r2.activation_range)
    # time spent inside d2's range moves the object at most across it
    lead = min(params.speed_mu * (win.t2 - t_arrive), r2.activation_range)
    fwd = GaussianBelief(post.mean + lead + params.speed_mu * dt_fwd - L,
                         post.variance + params.speed_sigma ** 2 * dt_fwd)
    s_max = fwd.mean + 6 * fwd.std
    s_min = fwd.mean - 6 * fwd.std
    route_w: dict[tuple, float] = {}
    by_legs = {}
    for h in kept:
        route_w[h.route.legs] = route_w.get(h.route.legs, 0.0) + h.weight
        by_legs[h.route.legs] = h.route
    for legs in sorted(route_w):
        route, w = by_legs[legs], route_w[legs]
        # the walk forks from where d2's range begins: doors and turns inside
        # the range are as reachable as the reader itself
        s_end = -min(r2.activation_range, route.length)
        e, off, direction = route_point(route, s_end)
        backward_pieces(grid, pieces, route, w, s_min, s_end)
        forward_pieces(grid, pieces, e, off, direction, s_end, w, s_max, params)
    return KalmanResult(kept, post, fwd, pieces.integrate(fwd.mean, fwd.std, grid.n_anchors))


def kalman_preprocess(store: ReadingStore, grid: AnchorGrid, candidates, t_current: int,
                      params: FilterParams = FilterParams()) -> dict[int, list[tuple[int, float]]]:
    out = {}
    for obj in sorted(candidates):
        res = kalman_object(store, grid, obj, t_current, params)
        if res is None:
            continue
        nz = np.flatnonzero(res.masses > 0)
        out[obj] = [(int(a), float(min(1.0, res.masses[a]))) for a in nz]
    return out
