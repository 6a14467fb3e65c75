"""Compiled versus pure-Python particle kernels.

Runs the same particle-filter workloads through both kernel modules, checks
that they return identical anchor counts, and prints best-of-N timings.

    python benchmarks/bench_kernels.py [--repeat 5] [--objects 50]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from indoorq import kernels
from indoorq.floorplan import build_walking_graph, generate_anchor_points, load_bundled_plan
from indoorq.params import FilterParams
from indoorq.particle import kernel_graph, particle_preprocess
from indoorq.readings import ReadingStore
from indoorq.sim.sensing import generate_readings
from indoorq.sim.traces import generate_traces


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def setup_world(n_objects: int, duration: int, seed: int):
    grid = generate_anchor_points(build_walking_graph(load_bundled_plan()), 1.0)
    traces = generate_traces(grid.graph, n_objects, duration, seed)
    store = ReadingStore([r.id for r in grid.graph.readers])
    store.ingest_many(generate_readings(traces, grid.graph, 0.9, seed))
    return grid, store


def bench_motion(kmod, kg, n: int, steps: int, params: FilterParams) -> None:
    rng = np.zeros(1, dtype=np.uint64)
    rng[0] = 12345
    edge = np.zeros(n, dtype=np.int64)
    off = np.zeros(n, dtype=np.float64)
    direction = np.ones(n, dtype=np.int64)
    speed = np.ones(n, dtype=np.float64)
    room = np.full(n, -1, dtype=np.int64)
    for _ in range(steps):
        kmod.motion_step(kg, edge, off, direction, speed, room, rng, 1.0,
                         params.room_entry_prob, params.room_stay_prob)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--objects", type=int, default=50)
    ap.add_argument("--duration", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    try:
        ck = kernels.get("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    py = kernels.get("python")
    grid, store = setup_world(args.objects, args.duration, args.seed)
    t = args.duration
    print(f"{'workload':<28}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for n_particles in (16, 64, 256):
        params = FilterParams(n_particles=n_particles)
        out = {}

        def run(kmod, params=params):
            out[kmod.__name__] = particle_preprocess(store, grid, store.objects, t, params, args.seed, kmod=kmod)

        tp = best_of(lambda: run(py), max(1, args.repeat // 2))
        tc = best_of(lambda: run(ck), args.repeat)
        if out[py.__name__] != out[ck.__name__]:
            raise SystemExit(f"kernels disagree at n_particles={n_particles}")
        print(f"{f'preprocess N_s={n_particles}':<28}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}x")

    params = FilterParams()
    for n in (64, 1024):
        kp, kc = kernel_graph(grid, py), kernel_graph(grid, ck)
        tp = best_of(lambda: bench_motion(py, kp, n, 100, params), max(1, args.repeat // 2))
        tc = best_of(lambda: bench_motion(ck, kc, n, 100, params), args.repeat)
        print(f"{f'motion 100 steps x {n}':<28}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}x")


if __name__ == "__main__":
    main()
