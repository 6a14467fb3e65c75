# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle-filter kernels.

Mirrors ``_pykernels`` operation for operation, including the order in which
random numbers are consumed, so both backends produce identical particles.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, floor, ceil

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.uint64_t u64

cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef int MAX_HOPS = 64


cdef inline u64 _next(u64[::1] state) nogil:
    cdef u64 z
    state[0] = state[0] + <u64>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _uniform(u64[::1] state) nogil:
    return <double>(_next(state) >> 11) * INV_2_53


cdef inline double _normal(u64[::1] state) nogil:
    cdef double u1 = 1.0 - _uniform(state)
    cdef double u2 = _uniform(state)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def uniform(u64[::1] state):
    return _uniform(state)


def normal(u64[::1] state):
    return _normal(state)


cdef class KernelGraph:
    """Flat arrays describing the walking graph, reader coverage and anchors."""

    cdef readonly i64[::1] edge_u, edge_v, node_ptr, node_edges
    cdef readonly i64[::1] node_room_ptr, node_rooms, room_node_ptr, room_nodes
    cdef readonly i64[::1] cover_ptr, cover_reader, rcov_ptr, rcov_edge, anchor_ptr
    cdef readonly double[::1] edge_len, cover_lo, cover_hi, rcov_lo, rcov_hi, rcov_len, anchor_off
    cdef readonly i64 n_edge_anchors, n_anchors, n_readers

    def __init__(self, edge_u, edge_v, edge_len, node_ptr, node_edges, node_room_ptr, node_rooms,
                 room_node_ptr, room_nodes, cover_ptr, cover_reader, cover_lo, cover_hi,
                 rcov_ptr, rcov_edge, rcov_lo, rcov_hi, anchor_ptr, anchor_off, n_anchors):
        i = lambda a: np.ascontiguousarray(a, dtype=np.int64)
        f = lambda a: np.ascontiguousarray(a, dtype=np.float64)
        self.edge_u = i(edge_u)
        self.edge_v = i(edge_v)
        self.edge_len = f(edge_len)
        self.node_ptr = i(node_ptr)
        self.node_edges = i(node_edges)
        self.node_room_ptr = i(node_room_ptr)
        self.node_rooms = i(node_rooms)
        self.room_node_ptr = i(room_node_ptr)
        self.room_nodes = i(room_nodes)
        self.cover_ptr = i(cover_ptr)
        self.cover_reader = i(cover_reader)
        self.cover_lo = f(cover_lo)
        self.cover_hi = f(cover_hi)
        self.rcov_ptr = i(rcov_ptr)
        self.rcov_edge = i(rcov_edge)
        self.rcov_lo = f(rcov_lo)
        self.rcov_hi = f(rcov_hi)
        self.rcov_len = f(np.asarray(rcov_hi, dtype=np.float64) - np.asarray(rcov_lo, dtype=np.float64))
        self.anchor_ptr = i(anchor_ptr)
        self.anchor_off = f(anchor_off)
        self.n_edge_anchors = self.anchor_ptr[len(self.anchor_ptr) - 1]
        self.n_anchors = n_anchors
        self.n_readers = len(self.rcov_ptr) - 1


cdef void _place(KernelGraph g, i64 reader, Py_ssize_t i, i64[::1] edge, double[::1] off,
                 i64[::1] direction, double[::1] speed, i64[::1] room, u64[::1] rng, double total,
                 double speed_mu, double speed_sigma, double speed_min):
    cdef i64 k = g.rcov_ptr[reader], hi = g.rcov_ptr[reader + 1]
    cdef double x = _uniform(rng) * total, s
    while k < hi - 1 and x >= g.rcov_len[k]:
        x -= g.rcov_len[k]
        k += 1
    if x > g.rcov_len[k]:
        x = g.rcov_len[k]
    edge[i] = g.rcov_edge[k]
    off[i] = g.rcov_lo[k] + x
    direction[i] = 1 if _uniform(rng) < 0.5 else -1
    s = speed_mu + speed_sigma * _normal(rng)
    speed[i] = s if s > speed_min else speed_min
    room[i] = -1


cdef double _covered(KernelGraph g, i64 reader):
    cdef double total = 0.0
    cdef i64 k
    for k in range(g.rcov_ptr[reader], g.rcov_ptr[reader + 1]):
        total += g.rcov_len[k]
    return total


cdef void _init(KernelGraph g, i64 reader, i64[::1] edge, double[::1] off, i64[::1] direction,
                double[::1] speed, i64[::1] room, double[::1] w, u64[::1] rng,
                double speed_mu, double speed_sigma, double speed_min):
    cdef Py_ssize_t n = edge.shape[0], i
    cdef double total = _covered(g, reader)
    for i in range(n):
        _place(g, reader, i, edge, off, direction, speed, room, rng, total,
               speed_mu, speed_sigma, speed_min)
        w[i] = 1.0 / n


cdef void _reset(KernelGraph g, i64 reader, Py_ssize_t k, i64[::1] edge, double[::1] off,
                 i64[::1] direction, double[::1] speed, i64[::1] room, u64[::1] rng,
                 double speed_mu, double speed_sigma, double speed_min):
    # replace k evenly spread particles with fresh draws inside the reader's range
    cdef Py_ssize_t n = edge.shape[0], j
    cdef double total = _covered(g, reader)
    for j in range(k):
        _place(g, reader, ((2 * j + 1) * n) // (2 * k), edge, off, direction, speed, room, rng,
               total, speed_mu, speed_sigma, speed_min)


def init_particles(KernelGraph g, i64 reader, i64[::1] edge, double[::1] off, i64[::1] direction,
                   double[::1] speed, i64[::1] room, double[::1] w, u64[::1] rng,
                   double speed_mu, double speed_sigma, double speed_min):
    _init(g, reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min)


cdef void _motion(KernelGraph g, i64[::1] edge, double[::1] off, i64[::1] direction,
                  double[::1] speed, i64[::1] room, u64[::1] rng, double dt,
                  double room_entry_prob, double room_stay_prob):
    cdef Py_ssize_t n = edge.shape[0], i
    cdef i64 e, node, cnt, k, pick, r, nr, hops, j
    cdef double remaining, to_end, L
    for i in range(n):
        if room[i] >= 0:
            if _uniform(rng) < room_stay_prob:
                continue
            r = room[i]
            nr = g.room_node_ptr[r + 1] - g.room_node_ptr[r]
            node = g.room_nodes[g.room_node_ptr[r] + <i64>floor(_uniform(rng) * nr)]
            cnt = g.node_ptr[node + 1] - g.node_ptr[node]
            e = g.node_edges[g.node_ptr[node] + <i64>floor(_uniform(rng) * cnt)]
            edge[i] = e
            room[i] = -1
            if g.edge_u[e] == node:
                direction[i] = 1
                off[i] = 0.0
            else:
                direction[i] = -1
                off[i] = g.edge_len[e]
            continue
        remaining = speed[i] * dt
        hops = 0
        while hops < MAX_HOPS:
            hops += 1
            e = edge[i]
            L = g.edge_len[e]
            to_end = L - off[i] if direction[i] > 0 else off[i]
            if remaining < to_end:
                off[i] = off[i] + direction[i] * remaining
                break
            remaining -= to_end
            node = g.edge_v[e] if direction[i] > 0 else g.edge_u[e]
            off[i] = L if direction[i] > 0 else 0.0
            nr = g.node_room_ptr[node + 1] - g.node_room_ptr[node]
            if nr > 0 and _uniform(rng) < room_entry_prob:
                room[i] = g.node_rooms[g.node_room_ptr[node] + <i64>floor(_uniform(rng) * nr)]
                edge[i] = -1
                off[i] = 0.0
                break
            cnt = g.node_ptr[node + 1] - g.node_ptr[node] - 1
            if cnt <= 0:
                direction[i] = -direction[i]
                continue
            pick = <i64>floor(_uniform(rng) * cnt)
            j = 0
            for k in range(g.node_ptr[node], g.node_ptr[node + 1]):
                if g.node_edges[k] == e:
                    continue
                if j == pick:
                    e = g.node_edges[k]
                    break
                j += 1
            edge[i] = e
            if g.edge_u[e] == node:
                direction[i] = 1
                off[i] = 0.0
            else:
                direction[i] = -1
                off[i] = g.edge_len[e]


def motion_step(KernelGraph g, i64[::1] edge, double[::1] off, i64[::1] direction,
                double[::1] speed, i64[::1] room, u64[::1] rng, double dt,
                double room_entry_prob, double room_stay_prob):
    _motion(g, edge, off, direction, speed, room, rng, dt, room_entry_prob, room_stay_prob)


cdef inline bint _in_reader(KernelGraph g, i64 e, double x, i64 reader):
    cdef i64 k
    if e < 0:
        return False
    for k in range(g.cover_ptr[e], g.cover_ptr[e + 1]):
        if (reader < 0 or g.cover_reader[k] == reader) and g.cover_lo[k] - 1e-9 <= x <= g.cover_hi[k] + 1e-9:
            return True
    return False


cdef double _weights(KernelGraph g, i64[::1] edge, double[::1] off, double[::1] w,
                     i64 reader, double p_hit, double eps):
    cdef Py_ssize_t n = edge.shape[0], i
    cdef double total = 0.0
    for i in range(n):
        if reader >= 0:
            w[i] *= p_hit if _in_reader(g, edge[i], off[i], reader) else eps
        else:
            if _in_reader(g, edge[i], off[i], -1):
                w[i] *= 1.0 - p_hit
        total += w[i]
    if total > 0.0:
        for i in range(n):
            w[i] /= total
    return total


cdef Py_ssize_t _count_in(KernelGraph g, i64[::1] edge, double[::1] off, i64 reader):
    cdef Py_ssize_t n = edge.shape[0], i, c = 0
    for i in range(n):
        if _in_reader(g, edge[i], off[i], reader):
            c += 1
    return c


def count_in_range(KernelGraph g, i64[::1] edge, double[::1] off, i64 reader):
    """Particles inside ``reader``'s covered arc (any reader when negative)."""
    return _count_in(g, edge, off, reader)


def update_weights(KernelGraph g, i64[::1] edge, double[::1] off, double[::1] w,
                   i64 reader, double p_hit, double eps):
    """Multiply in the sensing likelihood and normalise; returns the pre-normalisation total."""
    return _weights(g, edge, off, w, reader, p_hit, eps)


cdef void _resample(i64[::1] edge, double[::1] off, i64[::1] direction, double[::1] speed,
                    i64[::1] room, double[::1] w, u64[::1] rng, i64[::1] idx,
                    i64[::1] e2, double[::1] o2, i64[::1] d2, double[::1] s2, i64[::1] r2):
    cdef Py_ssize_t n = edge.shape[0], i, j = 0
    cdef double step = 1.0 / n
    cdef double u = _uniform(rng) * step
    cdef double c = w[0]
    for i in range(n):
        while u > c and j < n - 1:
            j += 1
            c += w[j]
        idx[i] = j
        u += step
    for i in range(n):
        e2[i] = edge[idx[i]]
        o2[i] = off[idx[i]]
        d2[i] = direction[idx[i]]
        s2[i] = speed[idx[i]]
        r2[i] = room[idx[i]]
    for i in range(n):
        edge[i] = e2[i]
        off[i] = o2[i]
        direction[i] = d2[i]
        speed[i] = s2[i]
        room[i] = r2[i]
        w[i] = step


def systematic_resample(i64[::1] edge, double[::1] off, i64[::1] direction, double[::1] speed,
                        i64[::1] room, double[::1] w, u64[::1] rng):
    """Resample in place; returns the ancestor index of every output particle."""
    cdef Py_ssize_t n = edge.shape[0]
    idx = np.empty(n, dtype=np.int64)
    _resample(edge, off, direction, speed, room, w, rng, idx,
              np.empty(n, dtype=np.int64), np.empty(n), np.empty(n, dtype=np.int64),
              np.empty(n), np.empty(n, dtype=np.int64))
    return idx


cdef i64 _nearest_anchor(KernelGraph g, i64 e, double x):
    cdef i64 lo = g.anchor_ptr[e], hi = g.anchor_ptr[e + 1], mid
    # first anchor with offset >= x
    cdef i64 a = lo, b = hi
    while a < b:
        mid = (a + b) // 2
        if g.anchor_off[mid] < x:
            a = mid + 1
        else:
            b = mid
    if a == lo:
        return lo
    if a >= hi:
        return hi - 1
    if x - g.anchor_off[a - 1] <= g.anchor_off[a] - x:
        return a - 1
    return a


cdef void _snap(KernelGraph g, i64[::1] edge, double[::1] off, i64[::1] room, i64[::1] counts):
    cdef Py_ssize_t n = edge.shape[0], i
    for i in range(n):
        if room[i] >= 0:
            counts[g.n_edge_anchors + room[i]] += 1
        else:
            counts[_nearest_anchor(g, edge[i], off[i])] += 1


def snap_to_anchors(KernelGraph g, i64[::1] edge, double[::1] off, i64[::1] room):
    counts = np.zeros(g.n_anchors, dtype=np.int64)
    _snap(g, edge, off, room, counts)
    return counts


def reset_target(Py_ssize_t n, double reset_fraction):
    """In-range particle count below which a reading triggers a partial reset."""
    return int(ceil(reset_fraction * n - 1e-12)) if reset_fraction > 0 else 0


def pf_run(KernelGraph g, i64[::1] readings, i64 init_reader, Py_ssize_t n_particles,
           u64 seed, double speed_mu, double speed_sigma, double speed_min,
           double room_entry_prob, double room_stay_prob, double p_hit, double eps,
           bint null_update, double reset_fraction):
    """Filter one object over consecutive seconds and return anchor particle counts.

    ``readings[j]`` is the reader index observed in second j of the window, or -1.
    """
    cdef Py_ssize_t n = n_particles, t, t2, T = readings.shape[0], n_in
    cdef Py_ssize_t target = reset_target(n, reset_fraction)
    cdef i64 reader
    cdef double total
    rng_arr = np.array([seed], dtype=np.uint64)
    cdef u64[::1] rng = rng_arr
    cdef i64[::1] edge = np.empty(n, dtype=np.int64)
    cdef double[::1] off = np.empty(n)
    cdef i64[::1] direction = np.empty(n, dtype=np.int64)
    cdef double[::1] speed = np.empty(n)
    cdef i64[::1] room = np.empty(n, dtype=np.int64)
    cdef double[::1] w = np.empty(n)
    cdef i64[::1] idx = np.empty(n, dtype=np.int64)
    cdef i64[::1] e2 = np.empty(n, dtype=np.int64)
    cdef double[::1] o2 = np.empty(n)
    cdef i64[::1] d2 = np.empty(n, dtype=np.int64)
    cdef double[::1] s2 = np.empty(n)
    cdef i64[::1] r2 = np.empty(n, dtype=np.int64)
    counts = np.zeros(g.n_anchors, dtype=np.int64)

    _init(g, init_reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min)
    for t in range(T):
        if t > 0:
            _motion(g, edge, off, direction, speed, room, rng, 1.0, room_entry_prob, room_stay_prob)
        reader = readings[t]
        if reader < 0 and not null_update:
            continue
        n_in = _count_in(g, edge, off, reader) if reader >= 0 and target > 0 else n
        if n_in == 0:
            # no particle can explain the reading: restart inside the reader's range
            _init(g, reader, edge, off, direction, speed, room, w, rng,
                  speed_mu, speed_sigma, speed_min)
            continue
        total = _weights(g, edge, off, w, reader, p_hit, eps)
        if total <= 0.0:
            if reader >= 0:
                _init(g, reader, edge, off, direction, speed, room, w, rng,
                      speed_mu, speed_sigma, speed_min)
            else:
                for t2 in range(n):
                    w[t2] = 1.0 / n
            continue
        _resample(edge, off, direction, speed, room, w, rng, idx, e2, o2, d2, s2, r2)
        if n_in < target:
            _reset(g, reader, target - n_in, edge, off, direction, speed, room, rng,
                   speed_mu, speed_sigma, speed_min)
    _snap(g, edge, off, room, counts)
    return counts
