"""End-to-end accuracy experiments: simulate, replay, filter, query, score."""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..floorplan import (AnchorGrid, FloorPlan, GraphLocation, Rect, anchor_weights, build_walking_graph,
                         decompose_range, generate_anchor_points, load_bundled_plan)
from ..index import AnchorIndex
from ..kalman import kalman_preprocess
from ..params import FilterParams
from ..particle import particle_preprocess
from ..pruning import prune_knn_candidates, prune_range_candidates
from ..queries import knn_query, weighted_query
from ..readings import RawReading, ReadingStore
from .baseline import uniform_baseline
from .metrics import cover_divergence, hit_rate
from .sensing import generate_readings
from .traces import generate_traces
from .truth import ground_truth_knn, ground_truth_range

BACKENDS = ("pf", "kf", "uniform")
SWEEPABLE = ("n_particles", "window_fraction", "k", "n_objects", "activation_range", "p_detect")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_particles: int = 64
    window_fraction: float = 0.02
    n_objects: int = 50
    k: tuple[int, ...] = (3,)
    activation_range: float = 2.0
    p_detect: float = 0.9
    seeds: tuple[int, ...] = (1,)
    duration: int = 300
    backend: str = "all"
    n_windows: int = 20
    n_timestamps: int = 20
    warmup: int = 60
    anchor_spacing: float = 1.0
    u_max: float = 1.5
    sweep: str | None = None
    values: tuple = ()

    def __post_init__(self):
        ks = (self.k,) if isinstance(self.k, int) else tuple(int(x) for x in self.k)
        object.__setattr__(self, "k", ks)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "values", tuple(self.values))
        self.validate()

    def validate(self) -> None:
        positive = ("n_particles", "n_objects", "activation_range", "duration", "n_windows",
                    "n_timestamps", "anchor_spacing", "u_max")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.window_fraction < 1:
            raise ConfigError("window_fraction must lie in (0, 1)")
        if not 0 < self.p_detect <= 1:
            raise ConfigError("p_detect must lie in (0, 1]")
        if not self.k or min(self.k) < 1:
            raise ConfigError("k must be positive")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.warmup < 0 or self.warmup >= self.duration:
            raise ConfigError("warmup must lie in [0, duration)")
        if self.backend not in BACKENDS + ("all",):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.sweep is not None and self.sweep not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.sweep!r}")
        if self.sweep is not None and not self.values:
            raise ConfigError("a sweep needs values")

    @property
    def backends(self) -> tuple[str, ...]:
        return BACKENDS if self.backend == "all" else (self.backend,)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("k", "seeds", "values"):
            d[key] = list(d[key])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def filter_params(cfg: ExperimentConfig) -> FilterParams:
    return FilterParams(n_particles=cfg.n_particles, u_max=cfg.u_max)


def run_backend(backend: str, store: ReadingStore, grid: AnchorGrid, candidates, t: int,
                params: FilterParams, seed: int) -> dict[int, list[tuple[int, float]]]:
    """Preprocess ``candidates`` with one filter backend."""
    if backend == "pf":
        return particle_preprocess(store, grid, candidates, t, params, seed)
    if backend == "kf":
        return kalman_preprocess(store, grid, candidates, t, params)
    if backend == "uniform":
        return uniform_baseline(store, grid, candidates, t, params.u_max)
    raise ValueError(f"unknown backend {backend!r}")


# --------------------------------------------------------------------------
# workload
# --------------------------------------------------------------------------


def random_windows(rng: np.random.Generator, plan: FloorPlan, fraction: float, n: int) -> list[Rect]:
    """Rectangles covering ``fraction`` of the floor area, sides scaled by sqrt(fraction)."""
    x0, y0, x1, y1 = plan.extent
    w, h = math.sqrt(fraction) * (x1 - x0), math.sqrt(fraction) * (y1 - y0)
    return [Rect(float(rng.uniform(x0, x1 - w)), float(rng.uniform(y0, y1 - h)), w, h) for _ in range(n)]


def random_graph_points(rng: np.random.Generator, grid: AnchorGrid, n: int) -> list[GraphLocation]:
    """Points uniform by length over the walking graph."""
    g = grid.graph
    p = g.edge_len / g.edge_len.sum()
    out = []
    for _ in range(n):
        e = int(rng.choice(g.n_edges, p=p))
        out.append(GraphLocation(e, float(rng.uniform(0, g.edge_len[e]))))
    return out


def sample_timestamps(rng: np.random.Generator, cfg: ExperimentConfig) -> list[int]:
    span = np.arange(cfg.warmup, cfg.duration + 1)
    n = min(cfg.n_timestamps, len(span))
    return sorted(int(t) for t in rng.choice(span, size=n, replace=False))


@dataclass
class Sample:
    backend: str
    param: str  # swept parameter, "default" outside sweeps
    label: str  # its value as written to the metrics file
    seed: int
    t: int
    query: str  # "range" or "knn"
    k: int
    metric: str
    value: float


@dataclass
class MetricsReport:
    """Per-query samples plus runtime; ``rows`` aggregates them."""

    samples: list[Sample] = field(default_factory=list)
    runtime: dict[tuple[str, str, str], float] = field(default_factory=dict)

    def mean(self, backend: str, metric: str, param: str = "default", value="", k: int | None = None) -> float:
        vals = [s.value for s in self._select(backend, metric, param, value, k)]
        return float(np.mean(vals)) if vals else math.nan

    def _select(self, backend, metric, param, value, k):
        return [s for s in self.samples
                if s.backend == backend and s.metric == metric and (s.param, s.label) == (param, str(value))
                and (k is None or s.k == k)]

    def rows(self) -> list[tuple]:
        groups: dict[tuple, list[float]] = {}
        for s in self.samples:
            metric = s.metric if s.query == "range" else f"{s.metric}@k={s.k}"
            groups.setdefault((s.backend, s.param, s.label, metric), []).append(s.value)
        out = []
        for key in sorted(groups):
            v = np.array(groups[key])
            out.append((*key, float(v.mean()), float(v.std()), len(v)))
        return out

    def write_metrics(self, out) -> None:
        out.write("backend,param,value,metric,mean,stddev,n\n")
        for b, p, v, m, mean, sd, n in self.rows():
            out.write(f"{b},{p},{v},{m},{mean:.9f},{sd:.9f},{n}\n")

    def write_runtime(self, out) -> None:
        out.write("backend,param,value,filter_seconds,query_seconds\n")
        for (b, p, v), secs in sorted(self.runtime.items()):
            fs, qs = secs
            out.write(f"{b},{p},{v},{fs:.6f},{qs:.6f}\n")

    def merge(self, other: "MetricsReport") -> None:
        self.samples.extend(other.samples)
        for key, (f, q) in other.runtime.items():
            f0, q0 = self.runtime.get(key, (0.0, 0.0))
            self.runtime[key] = (f0 + f, q0 + q)


# --------------------------------------------------------------------------
# one run
# --------------------------------------------------------------------------


@dataclass
class World:
    plan: FloorPlan
    grid: AnchorGrid
    traces: list
    readings: list[RawReading]


def build_world(cfg: ExperimentConfig, seed: int, plan: FloorPlan | None = None) -> World:
    plan = (plan or load_bundled_plan()).with_activation_range(cfg.activation_range)
    graph = build_walking_graph(plan)
    grid = generate_anchor_points(graph, cfg.anchor_spacing)
    traces = generate_traces(graph, cfg.n_objects, cfg.duration, seed, u_max=cfg.u_max)
    readings = generate_readings(traces, graph, cfg.p_detect, seed)
    return World(plan, grid, traces, readings)


def run_single(cfg: ExperimentConfig, seed: int, plan: FloorPlan | None = None,
               key: tuple[str, str] = ("default", ""), world: World | None = None) -> MetricsReport:
    """One seed: every sampled timestamp, every backend, every query."""
    world = world or build_world(cfg, seed, plan)
    grid, graph = world.grid, world.grid.graph
    params = filter_params(cfg)
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 41]))
    stamps = sample_timestamps(rng, cfg)
    store = ReadingStore([r.id for r in graph.readers])
    index = AnchorIndex(grid)
    report = MetricsReport()
    stream = iter(world.readings)
    pending = next(stream, None)
    k_max = max(cfg.k)
    timing = {b: [0.0, 0.0] for b in cfg.backends}
    for t in stamps:
        while pending is not None and int(math.floor(pending.timestamp)) <= t:
            store.ingest(pending)
            pending = next(stream, None)
        windows = random_windows(rng, world.plan, cfg.window_fraction, cfg.n_windows)
        points = random_graph_points(rng, grid, cfg.n_windows)
        weights = [anchor_weights(decompose_range(grid, world.plan, q), grid.n_anchors) for q in windows]
        cand = prune_range_candidates(windows, store, graph, t, cfg.u_max)
        for q in points:
            cand |= prune_knn_candidates(graph, q, k_max, store, t, cfg.u_max)
        truth_range = [ground_truth_range(world.traces, q, t) for q in windows]
        truth_knn = {k: [ground_truth_knn(world.traces, graph, q, k, t) for q in points] for k in cfg.k}
        for b in cfg.backends:
            t0 = time.perf_counter()
            updates = run_backend(b, store, grid, cand, t, params, seed)
            snap = index.replace_all(updates)
            t1 = time.perf_counter()
            for q, w, truth in zip(windows, weights, truth_range):
                res = weighted_query(w, snap)
                report.samples.append(_sample(b, seed, t, "range", 0, "cover_divergence",
                                              cover_divergence(truth, res), key))
            for k in cfg.k:
                for q, truth in zip(points, truth_knn[k]):
                    res = knn_query(q, k, snap, grid)
                    report.samples.append(_sample(b, seed, t, "knn", k, "hit_rate",
                                                  hit_rate(truth, res.objects), key))
            t2 = time.perf_counter()
            timing[b][0] += t1 - t0
            timing[b][1] += t2 - t1
    for b, (f, q) in timing.items():
        report.runtime[(b, *key)] = (f, q)
    return report


def _sample(backend, seed, t, query, k, metric, value, key) -> Sample:
    return Sample(backend, key[0], key[1], seed, t, query, k, metric, float(value))


def run_experiment(cfg: ExperimentConfig, plan: FloorPlan | None = None) -> MetricsReport:
    """All seeds, and every sweep value when a sweep is configured."""
    report = MetricsReport()
    if cfg.sweep is None:
        for seed in cfg.seeds:
            report.merge(run_single(cfg, seed, plan))
        return report
    for v in cfg.values:
        sub = dataclasses.replace(cfg, **{cfg.sweep: v, "sweep": None, "values": ()})
        key = (cfg.sweep, _fmt(v))
        for seed in cfg.seeds:
            report.merge(run_single(sub, seed, plan, key=key))
    return report


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return "/".join(str(x) for x in v)
    return str(v)


def write_outputs(report: MetricsReport, cfg: ExperimentConfig, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"metrics": out / "metrics.csv", "runtime": out / "runtime.csv", "config": out / "config.json"}
    with open(paths["metrics"], "w", newline="") as f:
        report.write_metrics(f)
    with open(paths["runtime"], "w", newline="") as f:
        report.write_runtime(f)
    paths["config"].write_text(cfg.to_json())
    return paths
