"""Synthetic trajectories on the walking graph.

Each object repeatedly picks a random destination node and walks the shortest
path there at a speed drawn per leg. Reaching a door node it steps into the
room behind it and lingers at a random spot for a while.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..floorplan import GraphLocation, WalkingGraph


@dataclass
class Trajectory:
    object_id: int
    locations: list[GraphLocation]  # one per second, t = 0..duration
    xy: np.ndarray  # (duration + 1, 2) true positions, lateral offset included
    speed: np.ndarray  # leg speed active at each second, nan while in a room

    def __len__(self) -> int:
        return len(self.locations)


def next_hop(graph: WalkingGraph, node: int, dst: int) -> tuple[int, int]:
    """Neighbour on a shortest path towards ``dst`` (lowest id on ties) and the edge used."""
    D = graph.node_dist
    best = None
    for m, e, w in graph.neighbors(node):
        key = (round(w + D[m, dst], 9), m, e)
        if best is None or key < best:
            best = key
    return best[1], best[2]


def shortest_node_path(graph: WalkingGraph, src: int, dst: int) -> list[tuple[int, int]]:
    """(edge, next node) steps from ``src`` to ``dst``."""
    out = []
    n = src
    while n != dst:
        m, e = next_hop(graph, n, dst)
        out.append((e, m))
        n = m
    return out


class _Walker:
    """Continuous-time motion of one object, sampled at integer seconds."""

    def __init__(self, graph: WalkingGraph, rng: np.random.Generator, speed_mu, speed_sigma,
                 speed_min, u_max, room_time_mu, room_time_sigma, lateral, fixed_speed):
        self.g = graph
        self.rng = rng
        self.speed_mu, self.speed_sigma = speed_mu, speed_sigma
        self.speed_min, self.u_max = speed_min, u_max
        self.room_time_mu, self.room_time_sigma = room_time_mu, room_time_sigma
        self.fixed_speed = fixed_speed
        self.lateral = float(rng.uniform(-0.5, 0.5)) if lateral else 0.0

    def draw_speed(self) -> float:
        if self.fixed_speed is not None:
            return float(self.fixed_speed)
        s = self.rng.normal(self.speed_mu, self.speed_sigma)
        return float(min(self.u_max, max(self.speed_min, s)))

    def edge_xy(self, e: int, off: float) -> tuple[float, float]:
        g = self.g
        a = g.node_xy[g.edge_u[e]]
        b = g.node_xy[g.edge_v[e]]
        L = g.edge_len[e]
        t = off / L
        # lateral shift perpendicular to the edge, as a fraction of hallway width
        w = g.plan.hallway_by_id[int(g.edge_hallway[e])].width
        nx, ny = -(b[1] - a[1]) / L, (b[0] - a[0]) / L
        d = self.lateral * w
        return (float(a[0] + t * (b[0] - a[0]) + d * nx), float(a[1] + t * (b[1] - a[1]) + d * ny))


def generate_traces(graph: WalkingGraph, n_objects: int, duration: int, seed: int,
                    speed_mu: float = 1.0, speed_sigma: float = 0.1, speed_min: float = 0.1,
                    u_max: float = 1.5, room_time_mu: float = 10.0, room_time_sigma: float = 2.0,
                    lateral: bool = True, fixed_speed: float | None = None,
                    start_nodes: list[int] | None = None,
                    destinations: list[list[int]] | None = None) -> list[Trajectory]:
    """Random-destination walks, one position per second for ``duration`` seconds.

    ``start_nodes`` and ``destinations`` pin the itinerary of each object for
    scripted scenarios; otherwise both are drawn from the seeded stream.
    """
    if n_objects < 0 or duration < 0:
        raise ValueError("object count and duration must be non-negative")
    out = []
    for obj in range(n_objects):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 17, obj]))
        w = _Walker(graph, rng, speed_mu, speed_sigma, speed_min, u_max, room_time_mu,
                    room_time_sigma, lateral, fixed_speed)
        start = start_nodes[obj] if start_nodes else int(rng.integers(graph.n_nodes))
        script = list(destinations[obj]) if destinations else None
        out.append(_walk(w, obj, start, duration, script))
    return out


def _walk(w: _Walker, obj: int, start: int, duration: int, script) -> Trajectory:
    g = w.g
    locs: list[GraphLocation] = []
    xys: list[tuple[float, float]] = []
    speeds: list[float] = []
    node = start
    e0 = int(g.incident_edges(node)[0])
    here = GraphLocation(e0, 0.0 if g.edge_u[e0] == node else float(g.edge_len[e0]))
    t_now = 0.0  # continuous clock
    next_sample = 0

    def emit(t_until, fn):
        nonlocal next_sample
        while next_sample <= duration and next_sample <= t_until + 1e-12:
            loc, xy, sp = fn(next_sample)
            locs.append(loc)
            xys.append(xy)
            speeds.append(sp)
            next_sample += 1

    while next_sample <= duration:
        if script is not None:
            if not script:
                # itinerary finished: stand still
                emit(math.inf, lambda t: (here, w.edge_xy(here.edge, here.offset), 0.0))
                break
            dst = script.pop(0)
        else:
            dst = int(w.rng.integers(g.n_nodes - 1))
            dst += dst >= node
        steps = shortest_node_path(g, node, dst)
        speed = w.draw_speed()
        # walk the legs as one stretch of arc length
        pieces = []
        s = 0.0
        for e, m in steps:
            L = float(g.edge_len[e])
            fwd = g.edge_v[e] == m
            pieces.append((s, e, fwd, L))
            s += L
        total = s
        t0 = t_now

        def at(t, pieces=pieces, t0=t0, speed=speed, total=total):
            arc = min(total, (t - t0) * speed)
            for s0, e, fwd, L in reversed(pieces):
                if arc >= s0 - 1e-12:
                    off = min(L, arc - s0)
                    off = off if fwd else L - off
                    return GraphLocation(e, off), w.edge_xy(e, off), speed
            return here, w.edge_xy(here.edge, here.offset), speed

        if total > 0:
            t_now = t0 + total / speed
            emit(t_now, at)
            last_e, last_fwd = pieces[-1][1], pieces[-1][2]
            here = GraphLocation(last_e, float(g.edge_len[last_e]) if last_fwd else 0.0)
        node = dst
        rooms = g.room_attachments.get(node, [])
        if rooms:
            rid = rooms[int(w.rng.integers(len(rooms)))]
            dwell = max(0.0, float(w.rng.normal(w.room_time_mu, w.room_time_sigma)))
            r = g.plan.room_by_id[rid]
            spot = (float(w.rng.uniform(r.x, r.x + r.w)), float(w.rng.uniform(r.y, r.y + r.h)))
            t_in = t_now
            t_now = t_in + dwell
            # the object is in the room strictly after reaching the door
            if dwell > 0:
                emit(t_now - 1e-9, lambda t, rid=rid, spot=spot: (GraphLocation.in_room(rid), spot, math.nan))
    return Trajectory(obj, locs, np.array(xys, dtype=float).reshape(-1, 2), np.array(speeds, dtype=float))
