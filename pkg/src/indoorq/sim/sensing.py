"""Noisy reading generation from true trajectories."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..floorplan import WalkingGraph
from ..readings import RawReading
from .traces import Trajectory


def readers_in_range(graph: WalkingGraph, xy) -> list[int]:
    """Reader ids whose activation circle contains ``xy``."""
    return [r.id for r in graph.readers
            if math.hypot(xy[0] - r.point[0], xy[1] - r.point[1]) <= r.activation_range]


def generate_readings(traces: Sequence[Trajectory], graph: WalkingGraph, p_detect: float,
                      seed: int) -> list[RawReading]:
    """One candidate reading per (second, object, reader in range), kept with ``p_detect``.

    Objects inside rooms are shielded from the hallway readers. Timestamps
    carry a millisecond jitter inside the second and the stream is sorted by
    (timestamp, object, reader).
    """
    if not 0 < p_detect <= 1:
        raise ValueError("detection probability must lie in (0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 29]))
    out = []
    for tr in traces:
        for t, (loc, xy) in enumerate(zip(tr.locations, tr.xy)):
            if loc.is_room:
                continue
            for rid in readers_in_range(graph, xy):
                keep = rng.random() < p_detect
                jitter = int(rng.integers(1000))
                if keep:
                    out.append(RawReading(t + jitter / 1000.0, tr.object_id, rid))
    out.sort()
    return out
