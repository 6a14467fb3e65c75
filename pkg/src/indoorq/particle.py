"""Particle-filter location inference on the walking graph.

Particles live on edges (edge id, offset, travel direction) or inside rooms.
The heavy lifting is done by :mod:`indoorq.kernels`; this module wraps the
kernels into particle-set operations and the per-object preprocessing pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .floorplan import AnchorGrid, GraphLocation
from .params import FilterParams
from .readings import ReadingStore


def kernel_graph(grid: AnchorGrid, kmod=None):
    """Flatten graph, reader coverage and anchors into a kernel graph (cached per grid)."""
    kmod = kmod or kernels.impl
    cache = grid.__dict__.setdefault("_kernel_graphs", {})
    if kmod.__name__ in cache:
        return cache[kmod.__name__]
    g = grid.graph
    per_edge: list[list[tuple[int, float, float]]] = [[] for _ in range(g.n_edges)]
    rcov_ptr = [0]
    rcov_edge, rcov_lo, rcov_hi = [], [], []
    for r in g.readers:
        for e, lo, hi in r.coverage:
            per_edge[e].append((r.index, lo, hi))
            rcov_edge.append(e)
            rcov_lo.append(lo)
            rcov_hi.append(hi)
        rcov_ptr.append(len(rcov_edge))
    cover_ptr = np.zeros(g.n_edges + 1, dtype=np.int64)
    cover_ptr[1:] = np.cumsum([len(x) for x in per_edge])
    flat = [c for x in per_edge for c in x]
    kg = kmod.KernelGraph(
        g.edge_u, g.edge_v, g.edge_len, g.node_ptr, g.node_edges,
        g.node_room_ptr, g.node_rooms, g.room_node_ptr, g.room_nodes,
        cover_ptr, [c[0] for c in flat], [c[1] for c in flat], [c[2] for c in flat],
        rcov_ptr, rcov_edge, rcov_lo, rcov_hi,
        grid.edge_ptr, grid.offset[:grid.n_edge_anchors], grid.n_anchors,
    )
    cache[kmod.__name__] = kg
    return kg


def object_seed(base_seed: int, object_id: int, t: int) -> int:
    """Independent 64-bit stream seed per (run, object, evaluation time)."""
    ss = np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(object_id), int(t)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class SplitMix64:
    """Seedable stream shared with the kernels; ``spawn`` derives child streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.state = np.array([self.seed], dtype=np.uint64)

    def spawn(self, key: int) -> "SplitMix64":
        return SplitMix64(object_seed(self.seed, key, 0))

    def uniform(self) -> float:
        return kernels.uniform(self.state)


@dataclass
class ParticleSet:
    object_id: int
    edge: np.ndarray
    offset: np.ndarray
    direction: np.ndarray
    speed: np.ndarray
    room: np.ndarray  # dense room index, -1 when on an edge
    weight: np.ndarray

    @property
    def n(self) -> int:
        return len(self.edge)

    @classmethod
    def empty(cls, object_id: int, n: int) -> "ParticleSet":
        return cls(object_id, np.zeros(n, np.int64), np.zeros(n), np.zeros(n, np.int64),
                   np.zeros(n), np.full(n, -1, np.int64), np.full(n, 1.0 / n))

    def locations(self, grid: AnchorGrid) -> list[GraphLocation]:
        rooms = grid.graph.room_ids
        return [GraphLocation.in_room(rooms[r]) if r >= 0 else GraphLocation(int(e), float(o))
                for e, o, r in zip(self.edge, self.offset, self.room)]


def init_particles(grid: AnchorGrid, reader_id: int, n: int, rng: SplitMix64,
                   params: FilterParams = FilterParams(), object_id: int = -1) -> ParticleSet:
    """Spread ``n`` particles uniformly over the arc length a reader covers."""
    if n < 1:
        raise ValueError("need at least one particle")
    ps = ParticleSet.empty(object_id, n)
    kernels.init_particles(kernel_graph(grid), grid.graph.reader_index[reader_id], ps.edge, ps.offset,
                           ps.direction, ps.speed, ps.room, ps.weight, rng.state,
                           params.speed_mu, params.speed_sigma, params.speed_min)
    return ps


def step_motion(grid: AnchorGrid, ps: ParticleSet, rng: SplitMix64, dt: float = 1.0,
                params: FilterParams = FilterParams()) -> ParticleSet:
    if dt <= 0:
        raise ValueError("dt must be positive")
    kernels.motion_step(kernel_graph(grid), ps.edge, ps.offset, ps.direction, ps.speed, ps.room,
                        rng.state, dt, params.room_entry_prob, params.room_stay_prob)
    return ps


def update_weights(grid: AnchorGrid, ps: ParticleSet, reader_id: int | None,
                   params: FilterParams = FilterParams(), rng: SplitMix64 | None = None) -> ParticleSet:
    """Weight by the sensing model and normalise.

    A reading from ``reader_id`` favours particles inside its range; ``None``
    (no reading) penalises particles inside any range. If every weight
    collapses to zero, or (with a positive ``params.reset_fraction``) no particle lies inside
    the reading device's range, the set is re-initialised in that range.
    """
    idx = -1 if reader_id is None else grid.graph.reader_index[reader_id]
    kg = kernel_graph(grid)
    unmatched = (params.reset_fraction > 0 and idx >= 0
                 and kernels.count_in_range(kg, ps.edge, ps.offset, idx) == 0)
    total = 0.0 if unmatched else kernels.update_weights(kg, ps.edge, ps.offset, ps.weight,
                                                         idx, params.p_hit, params.eps)
    if total <= 0.0:
        if reader_id is None:
            ps.weight[:] = 1.0 / ps.n
        else:
            fresh = init_particles(grid, reader_id, ps.n, rng or SplitMix64(0), params, ps.object_id)
            for name in ("edge", "offset", "direction", "speed", "room", "weight"):
                setattr(ps, name, getattr(fresh, name))
    return ps


def resample(ps: ParticleSet, rng: SplitMix64) -> np.ndarray:
    """Systematic resampling in place; returns ancestor indices."""
    return kernels.systematic_resample(ps.edge, ps.offset, ps.direction, ps.speed, ps.room,
                                       ps.weight, rng.state)


def snap_to_anchors(grid: AnchorGrid, ps: ParticleSet) -> np.ndarray:
    """Particle count per anchor (nearest anchor on the particle's edge, or its room's anchor)."""
    return kernels.snap_to_anchors(kernel_graph(grid), ps.edge, ps.offset, ps.room)


def window_readings(store: ReadingStore, grid: AnchorGrid, object_id: int, t_end: int):
    """Reader index per second over the object's window, -1 for silent seconds."""
    win = store.aggregated_window(object_id)
    ridx = grid.graph.reader_index
    seq = np.full(t_end - win.t1 + 1, -1, dtype=np.int64)
    for e in win.entries:
        if e.second <= t_end:
            seq[e.second - win.t1] = ridx[e.reader_id]
    return win, seq


def particle_preprocess(store: ReadingStore, grid: AnchorGrid, candidates, t_current: int,
                        params: FilterParams = FilterParams(), seed: int = 0,
                        kmod=None) -> dict[int, list[tuple[int, float]]]:
    """Run the particle filter for every candidate and discretise onto anchors.

    Particles start in the range of the older retained device at the start of
    the window and are filtered second by second up to
    ``min(t2 + horizon, t_current)``; each anchor then receives n / N_s.
    """
    kmod = kmod or kernels.impl
    kg = kernel_graph(grid, kmod)
    out = {}
    for obj in sorted(candidates):
        win = store.aggregated_window(obj)
        if win is None:
            continue
        t_min = min(win.t2 + params.horizon, int(t_current))
        _, seq = window_readings(store, grid, obj, t_min)
        counts = kmod.pf_run(
            kg, seq, grid.graph.reader_index[win.d1], params.n_particles,
            np.uint64(object_seed(seed, obj, t_current)),
            params.speed_mu, params.speed_sigma, params.speed_min,
            params.room_entry_prob, params.room_stay_prob, params.p_hit, params.eps,
            params.null_update, params.reset_fraction,
        )
        nz = np.flatnonzero(counts)
        out[obj] = [(int(a), counts[a] / params.n_particles) for a in nz]
    return out
