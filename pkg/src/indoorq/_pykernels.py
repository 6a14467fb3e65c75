"""Pure-Python particle-filter kernels.

Used when the compiled extension is unavailable. Each function consumes the
random stream in exactly the same order as its compiled counterpart, so a
given seed produces the same particles on either backend.
"""

import math

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 6.283185307179586
MAX_HOPS = 64


def _next(state):
    s = (int(state[0]) + _GOLDEN) & _MASK
    state[0] = s
    z = s
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def uniform(state):
    return (_next(state) >> 11) * _INV_2_53


def normal(state):
    u1 = 1.0 - uniform(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


class _Rng:
    """Scalar splitmix64 state; avoids numpy scalar overhead in hot loops."""

    __slots__ = ("s",)

    def __init__(self, seed):
        self.s = int(seed) & _MASK

    def uniform(self):
        s = (self.s + _GOLDEN) & _MASK
        self.s = s
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return ((z ^ (z >> 31)) >> 11) * _INV_2_53

    def normal(self):
        u1 = 1.0 - self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


def _wrap(state):
    return _Rng(int(state[0]))


def _store(rng, state):
    state[0] = rng.s


class KernelGraph:
    """Flat arrays describing the walking graph, reader coverage and anchors."""

    def __init__(self, edge_u, edge_v, edge_len, node_ptr, node_edges, node_room_ptr, node_rooms,
                 room_node_ptr, room_nodes, cover_ptr, cover_reader, cover_lo, cover_hi,
                 rcov_ptr, rcov_edge, rcov_lo, rcov_hi, anchor_ptr, anchor_off, n_anchors):
        as_int = lambda a: [int(x) for x in a]
        as_float = lambda a: [float(x) for x in a]
        self.edge_u = as_int(edge_u)
        self.edge_v = as_int(edge_v)
        self.edge_len = as_float(edge_len)
        self.node_ptr = as_int(node_ptr)
        self.node_edges = as_int(node_edges)
        self.node_room_ptr = as_int(node_room_ptr)
        self.node_rooms = as_int(node_rooms)
        self.room_node_ptr = as_int(room_node_ptr)
        self.room_nodes = as_int(room_nodes)
        self.cover_ptr = as_int(cover_ptr)
        self.cover_reader = as_int(cover_reader)
        self.cover_lo = as_float(cover_lo)
        self.cover_hi = as_float(cover_hi)
        self.rcov_ptr = as_int(rcov_ptr)
        self.rcov_edge = as_int(rcov_edge)
        self.rcov_lo = as_float(rcov_lo)
        self.rcov_hi = as_float(rcov_hi)
        self.rcov_len = [h - l for l, h in zip(self.rcov_lo, self.rcov_hi)]
        self.anchor_ptr = as_int(anchor_ptr)
        self.anchor_off = as_float(anchor_off)
        self.n_edge_anchors = self.anchor_ptr[-1]
        self.n_anchors = int(n_anchors)
        self.n_readers = len(self.rcov_ptr) - 1


def _place(g, reader, i, edge, off, direction, speed, room, rng, total, speed_mu, speed_sigma, speed_min):
    lo, hi = g.rcov_ptr[reader], g.rcov_ptr[reader + 1]
    x = rng.uniform() * total
    k = lo
    while k < hi - 1 and x >= g.rcov_len[k]:
        x -= g.rcov_len[k]
        k += 1
    if x > g.rcov_len[k]:
        x = g.rcov_len[k]
    edge[i] = g.rcov_edge[k]
    off[i] = g.rcov_lo[k] + x
    direction[i] = 1 if rng.uniform() < 0.5 else -1
    s = speed_mu + speed_sigma * rng.normal()
    speed[i] = s if s > speed_min else speed_min
    room[i] = -1


def _covered(g, reader):
    total = 0.0
    for k in range(g.rcov_ptr[reader], g.rcov_ptr[reader + 1]):
        total += g.rcov_len[k]
    return total


def _init(g, reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min):
    n = len(edge)
    total = _covered(g, reader)
    for i in range(n):
        _place(g, reader, i, edge, off, direction, speed, room, rng, total, speed_mu, speed_sigma, speed_min)
        w[i] = 1.0 / n


def _reset(g, reader, k, edge, off, direction, speed, room, rng, speed_mu, speed_sigma, speed_min):
    # replace k evenly spread particles with fresh draws inside the reader's range
    n = len(edge)
    total = _covered(g, reader)
    for j in range(k):
        i = ((2 * j + 1) * n) // (2 * k)
        _place(g, reader, i, edge, off, direction, speed, room, rng, total, speed_mu, speed_sigma, speed_min)


def _motion(g, edge, off, direction, speed, room, rng, dt, room_entry_prob, room_stay_prob):
    for i in range(len(edge)):
        if room[i] >= 0:
            if rng.uniform() < room_stay_prob:
                continue
            r = room[i]
            nr = g.room_node_ptr[r + 1] - g.room_node_ptr[r]
            node = g.room_nodes[g.room_node_ptr[r] + int(math.floor(rng.uniform() * nr))]
            cnt = g.node_ptr[node + 1] - g.node_ptr[node]
            e = g.node_edges[g.node_ptr[node] + int(math.floor(rng.uniform() * cnt))]
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
            if nr > 0 and rng.uniform() < room_entry_prob:
                room[i] = g.node_rooms[g.node_room_ptr[node] + int(math.floor(rng.uniform() * nr))]
                edge[i] = -1
                off[i] = 0.0
                break
            cnt = g.node_ptr[node + 1] - g.node_ptr[node] - 1
            if cnt <= 0:
                direction[i] = -direction[i]
                continue
            pick = int(math.floor(rng.uniform() * cnt))
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


def _in_reader(g, e, x, reader):
    if e < 0:
        return False
    for k in range(g.cover_ptr[e], g.cover_ptr[e + 1]):
        if (reader < 0 or g.cover_reader[k] == reader) and g.cover_lo[k] - 1e-9 <= x <= g.cover_hi[k] + 1e-9:
            return True
    return False


def _count_in(g, edge, off, reader):
    return sum(1 for e, x in zip(edge, off) if _in_reader(g, e, x, reader))


def _weights(g, edge, off, w, reader, p_hit, eps):
    n = len(edge)
    total = 0.0
    for i in range(n):
        if reader >= 0:
            w[i] *= p_hit if _in_reader(g, edge[i], off[i], reader) else eps
        elif _in_reader(g, edge[i], off[i], -1):
            w[i] *= 1.0 - p_hit
        total += w[i]
    if total > 0.0:
        for i in range(n):
            w[i] /= total
    return total


def _resample(edge, off, direction, speed, room, w, rng):
    n = len(edge)
    step = 1.0 / n
    u = rng.uniform() * step
    c = w[0]
    j = 0
    idx = [0] * n
    for i in range(n):
        while u > c and j < n - 1:
            j += 1
            c += w[j]
        idx[i] = j
        u += step
    for arr in (edge, off, direction, speed, room):
        src = list(arr)
        for i in range(n):
            arr[i] = src[idx[i]]
    for i in range(n):
        w[i] = step
    return idx


def _nearest_anchor(g, e, x):
    lo, hi = g.anchor_ptr[e], g.anchor_ptr[e + 1]
    a, b = lo, hi
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
    return a - 1 if x - g.anchor_off[a - 1] <= g.anchor_off[a] - x else a


def _snap(g, edge, off, room, counts):
    for i in range(len(edge)):
        if room[i] >= 0:
            counts[g.n_edge_anchors + room[i]] += 1
        else:
            counts[_nearest_anchor(g, edge[i], off[i])] += 1


# -- public surface, same signatures as the compiled module -------------------


def _lists(*arrays):
    return [a.tolist() for a in arrays]


def _writeback(arrays, lists):
    for a, l in zip(arrays, lists):
        a[:] = l


def init_particles(g, reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min):
    arrs = (edge, off, direction, speed, room, w)
    ls = _lists(*arrs)
    r = _wrap(rng)
    _init(g, reader, *ls, r, speed_mu, speed_sigma, speed_min)
    _writeback(arrs, ls)
    _store(r, rng)


def motion_step(g, edge, off, direction, speed, room, rng, dt, room_entry_prob, room_stay_prob):
    arrs = (edge, off, direction, speed, room)
    ls = _lists(*arrs)
    r = _wrap(rng)
    _motion(g, *ls, r, dt, room_entry_prob, room_stay_prob)
    _writeback(arrs, ls)
    _store(r, rng)


def count_in_range(g, edge, off, reader):
    """Particles inside ``reader``'s covered arc (any reader when negative)."""
    return _count_in(g, edge.tolist(), off.tolist(), reader)


def update_weights(g, edge, off, w, reader, p_hit, eps):
    """Multiply in the sensing likelihood and normalise; returns the pre-normalisation total."""
    wl = w.tolist()
    total = _weights(g, edge.tolist(), off.tolist(), wl, reader, p_hit, eps)
    w[:] = wl
    return total


def systematic_resample(edge, off, direction, speed, room, w, rng):
    """Resample in place; returns the ancestor index of every output particle."""
    arrs = (edge, off, direction, speed, room, w)
    ls = _lists(*arrs)
    r = _wrap(rng)
    idx = _resample(*ls, r)
    _writeback(arrs, ls)
    _store(r, rng)
    return np.array(idx, dtype=np.int64)


def snap_to_anchors(g, edge, off, room):
    counts = [0] * g.n_anchors
    _snap(g, edge.tolist(), off.tolist(), room.tolist(), counts)
    return np.array(counts, dtype=np.int64)


def reset_target(n, reset_fraction):
    """In-range particle count below which a reading triggers a partial reset."""
    return int(math.ceil(reset_fraction * n - 1e-12)) if reset_fraction > 0 else 0


def pf_run(g, readings, init_reader, n_particles, seed, speed_mu, speed_sigma, speed_min,
           room_entry_prob, room_stay_prob, p_hit, eps, null_update, reset_fraction):
    """Filter one object over consecutive seconds and return anchor particle counts.

    ``readings[j]`` is the reader index observed in second j of the window, or -1.
    """
    n = n_particles
    rng = _Rng(seed)
    edge, off, direction = [0] * n, [0.0] * n, [0] * n
    speed, room, w = [0.0] * n, [0] * n, [0.0] * n
    target = reset_target(n, reset_fraction)
    _init(g, init_reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min)
    for t, reader in enumerate(int(r) for r in readings):
        if t > 0:
            _motion(g, edge, off, direction, speed, room, rng, 1.0, room_entry_prob, room_stay_prob)
        if reader < 0 and not null_update:
            continue
        n_in = _count_in(g, edge, off, reader) if reader >= 0 and target > 0 else n
        if n_in == 0:
            # no particle can explain the reading: restart inside the reader's range
            _init(g, reader, edge, off, direction, speed, room, w, rng, speed_mu, speed_sigma, speed_min)
            continue
        total = _weights(g, edge, off, w, reader, p_hit, eps)
        if total <= 0.0:
            if reader >= 0:
                _init(g, reader, edge, off, direction, speed, room, w, rng,
                      speed_mu, speed_sigma, speed_min)
            else:
                w[:] = [1.0 / n] * n
            continue
        _resample(edge, off, direction, speed, room, w, rng)
        if n_in < target:
            _reset(g, reader, target - n_in, edge, off, direction, speed, room, rng,
                   speed_mu, speed_sigma, speed_min)
    counts = [0] * g.n_anchors
    _snap(g, edge, off, room, counts)
    return np.array(counts, dtype=np.int64)
