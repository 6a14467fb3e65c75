"""Simulator: traces, readings, ground truth, metrics, baseline, experiments."""

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indoorq.floorplan import GraphLocation, Rect, build_walking_graph, generate_anchor_points, load_floorplan
from indoorq.index import AnchorIndex
from indoorq.params import FilterParams
from indoorq.particle import particle_preprocess
from indoorq.queries import knn_query
from indoorq.readings import ReadingStore
from indoorq.sim.baseline import uniform_baseline
from indoorq.sim.experiment import ConfigError, ExperimentConfig, run_experiment, run_single, write_outputs
from indoorq.sim.metrics import cover_divergence, hit_rate
from indoorq.sim.sensing import generate_readings
from indoorq.sim.traces import generate_traces
from indoorq.sim.truth import ground_truth_knn, ground_truth_range

from conftest import feed, plan_doc
from oracles import floyd_warshall_with


@pytest.fixture(scope="module")
def short_graph():
    """A 10 m hallway with a reader at its left end."""
    return build_walking_graph(load_floorplan(plan_doc([(0, 0, 10, 0, 2)], readers=[(0, 0.0, 2.0)])))


def node_at(g, x):
    return int(np.argmin(np.abs(g.node_xy[:, 0] - x) + np.abs(g.node_xy[:, 1])))


class TestTraces:
    def test_zero_duration(self, bundled_graph):
        trs = generate_traces(bundled_graph, 5, 0, 1)
        assert [len(t) for t in trs] == [1] * 5

    def test_fixed_speed_arrival(self, short_graph):
        g = short_graph
        (tr,) = generate_traces(g, 1, 15, 1, fixed_speed=1.0, lateral=False,
                                start_nodes=[node_at(g, 0)], destinations=[[node_at(g, 10)]])
        xs = tr.xy[:, 0]
        assert xs[9] == pytest.approx(9.0)
        assert xs[10] == pytest.approx(10.0)
        assert np.all(xs[10:] == 10.0)

    def test_step_statistics(self, bundled_graph):
        # the first whole second of each leg is one independent speed draw
        g = bundled_graph
        steps = []
        for tr in generate_traces(g, 520, 1000, 3):
            for t in range(len(tr) - 1):
                a, b = tr.locations[t], tr.locations[t + 1]
                if a.is_room or b.is_room or tr.speed[t] != tr.speed[t + 1]:
                    continue
                if t == 0 or tr.speed[t - 1] != tr.speed[t]:
                    steps.append(g.location_distance(a, b))
        assert len(steps) >= 10_000
        assert np.mean(steps) == pytest.approx(1.0, abs=0.01)
        assert np.std(steps) == pytest.approx(0.1, abs=0.01)

    def test_speed_bound(self, bundled_graph):
        g = bundled_graph
        for tr in generate_traces(g, 20, 300, 4):
            for t in range(len(tr) - 1):
                a, b = tr.locations[t], tr.locations[t + 1]
                if a.is_room or b.is_room:
                    continue
                assert g.location_distance(a, b) <= 1.5 + 1e-9

    def test_deterministic(self, bundled_graph):
        a = generate_traces(bundled_graph, 3, 100, 9)
        b = generate_traces(bundled_graph, 3, 100, 9)
        assert all(np.array_equal(x.xy, y.xy) for x, y in zip(a, b))
        c = generate_traces(bundled_graph, 3, 100, 10)
        assert not all(np.array_equal(x.xy, y.xy) for x, y in zip(a, c))

    def test_negative_duration(self, bundled_graph):
        with pytest.raises(ValueError):
            generate_traces(bundled_graph, 1, -1, 0)


class TestReadings:
    def standing(self, g, x, duration):
        return generate_traces(g, 1, duration, 2, lateral=False, start_nodes=[node_at(g, x)], destinations=[[]])

    def test_certain_detection(self, short_graph):
        rs = generate_readings(self.standing(short_graph, 0, 99), short_graph, 1.0, 1)
        assert [int(r.timestamp) for r in rs] == list(range(100))

    def test_detection_frequency(self, short_graph):
        rs = generate_readings(self.standing(short_graph, 0, 9_999), short_graph, 0.9, 5)
        assert len(rs) / 10_000 == pytest.approx(0.9, abs=0.01)

    def test_never_in_range(self, short_graph):
        assert generate_readings(self.standing(short_graph, 10, 500), short_graph, 0.9, 1) == []

    def test_sorted_and_deterministic(self, bundled_graph):
        trs = generate_traces(bundled_graph, 10, 200, 6)
        a = generate_readings(trs, bundled_graph, 0.9, 6)
        assert a == sorted(a) and a == generate_readings(trs, bundled_graph, 0.9, 6)

    def test_rooms_shield(self, bundled_graph):
        trs = generate_traces(bundled_graph, 10, 300, 8)
        room_secs = {(tr.object_id, t) for tr in trs for t, loc in enumerate(tr.locations) if loc.is_room}
        assert room_secs
        for r in generate_readings(trs, bundled_graph, 1.0, 8):
            assert (r.object_id, int(r.timestamp)) not in room_secs

    def test_bad_probability(self, short_graph):
        with pytest.raises(ValueError):
            generate_readings([], short_graph, 0.0, 1)


@pytest.fixture(scope="module")
def world(bundled_graph):
    return generate_traces(bundled_graph, 25, 120, 12)


class TestGroundTruth:
    def test_whole_floor(self, world):
        assert ground_truth_range(world, Rect(-1, -1, 82, 42), 50) == set(range(25))

    def test_k_equals_count(self, world, bundled_graph):
        assert ground_truth_knn(world, bundled_graph, GraphLocation(3, 1.0), 25, 50) == set(range(25))

    def test_knn_against_floyd_warshall(self, world, bundled_graph):
        g = bundled_graph
        rng = np.random.default_rng(0)
        for _ in range(10):
            t = int(rng.integers(121))
            e = int(rng.integers(g.n_edges))
            q = GraphLocation(e, float(rng.uniform(0, g.edge_len[e])))
            on_edge = [tr for tr in world if not tr.locations[t].is_room]
            D, ids = floyd_warshall_with(g, [q] + [tr.locations[t] for tr in on_edge])
            d = {tr.object_id: D[ids[0], ids[i + 1]] for i, tr in enumerate(on_edge)}
            for tr in world:
                loc = tr.locations[t]
                if loc.is_room:
                    d[tr.object_id] = min(D[ids[0], n] for n in g.room_door_nodes[loc.room])
            ranked = sorted(d, key=lambda o: (round(d[o], 6), o))
            got = ground_truth_knn(world, g, q, 4, t)
            assert got == set(ranked[:4]) or _tied(d, got, ranked[:4])

    def test_range_against_positions(self, world):
        q = Rect(10, 5, 20, 10)
        for t in (0, 60, 120):
            expect = {tr.object_id for tr in world
                      if 10 <= tr.xy[t][0] <= 30 and 5 <= tr.xy[t][1] <= 15}
            assert ground_truth_range(world, q, t) == expect


def _tied(d, a, b):
    return sorted(round(d[o], 6) for o in a) == sorted(round(d[o], 6) for o in b)


class TestMetrics:
    def test_cover_divergence_example(self):
        cd = cover_divergence({1, 2, 3}, {1: 0.9, 2: 0.8, 3: 0.7, 5: 0.5})
        assert cd == pytest.approx(0.6851, abs=1e-4)

    def test_cover_divergence_perfect(self):
        assert cover_divergence({1, 2}, {1: 1.0, 2: 1.0}) == 0.0

    def test_cover_divergence_floor(self):
        assert cover_divergence({1}, {}) == pytest.approx(13.8155, abs=1e-4)

    def test_hit_rate_example(self):
        assert hit_rate({1, 2, 3}, {1, 2, 4, 5}) == pytest.approx(0.667, abs=1e-3)

    def test_hit_rate_extremes(self):
        assert hit_rate({1, 2}, {1, 2, 3}) == 1.0
        assert hit_rate({1, 2}, {3}) == 0.0
        with pytest.raises(ValueError):
            hit_rate(set(), {1})

    @settings(max_examples=300)
    @given(st.sets(st.integers(0, 9), max_size=6),
           st.dictionaries(st.integers(0, 12), st.floats(0, 1), max_size=8))
    def test_cover_divergence_nonnegative(self, truth, pred):
        cd = cover_divergence(truth, pred)
        assert cd >= 0
        assert (cd == 0) == all(pred.get(o, 0) >= 1 - 1e-12 for o in truth)

    @settings(max_examples=300)
    @given(st.sets(st.integers(0, 9), min_size=1, max_size=6), st.sets(st.integers(0, 12)),
           st.sets(st.integers(0, 12)))
    def test_hit_rate_monotone(self, truth, pred, extra):
        h = hit_rate(truth, pred)
        assert 0 <= h <= 1
        assert hit_rate(truth, pred | extra) >= h


class TestBaseline:
    def test_at_detection_covers_reader(self, bundled_grid):
        g = bundled_grid.graph
        s = feed(ReadingStore([r.id for r in g.readers]), [(10, 1, 4)])
        (entries,) = uniform_baseline(s, bundled_grid, [1], 10).values()
        assert sum(p for _, p in entries) == pytest.approx(1.0)
        assert len({p for _, p in entries}) == 1
        r = g.readers[g.reader_index[4]]
        for a, _ in entries:
            assert bundled_grid.anchor_distances(r.location)[a] <= r.activation_range + 1e-9

    def test_reachable_set_matches_floyd_warshall(self, bundled_grid):
        g = bundled_grid.graph
        n_e = bundled_grid.n_edge_anchors
        for rid, dt in ((0, 5), (7, 12), (14, 20)):
            s = feed(ReadingStore([r.id for r in g.readers]), [(0, 1, rid)])
            got = {a for a, _ in uniform_baseline(s, bundled_grid, [1], dt)[1]}
            loc = g.readers[g.reader_index[rid]].location
            D, ids = floyd_warshall_with(g, [loc] + [bundled_grid.location(a) for a in range(n_e)])
            radius = 1.5 * dt + 2.0
            expect = {a for a in range(n_e) if D[ids[0], ids[1 + a]] <= radius + 1e-9}
            for room, (a,) in bundled_grid.room_anchor_map.items():
                if min(D[ids[0], n] for n in g.room_door_nodes[room]) <= radius + 1e-9:
                    expect.add(a)
            assert got == expect

    def test_undetected_skipped(self, bundled_grid):
        s = ReadingStore([r.id for r in bundled_grid.graph.readers])
        assert uniform_baseline(s, bundled_grid, [1], 10) == {}


class TestConfig:
    @pytest.mark.parametrize("bad", [
        {"n_particles": 0}, {"window_fraction": 1.0}, {"window_fraction": 0.0}, {"p_detect": 1.5},
        {"k": [0]}, {"seeds": []}, {"warmup": 400}, {"backend": "hmm"}, {"sweep": "speed", "values": [1]},
        {"sweep": "k", "values": []}, {"activation_range": -1.0},
    ])
    def test_rejected(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(bad)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"objects": 3})

    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(k=(2, 5), seeds=(1, 2), sweep="n_particles", values=(8, 16))
        p = tmp_path / "c.json"
        p.write_text(cfg.to_json())
        assert ExperimentConfig.load(p) == cfg


class TestExperiment:
    def test_single_object_perfectly_observed(self):
        doc = plan_doc([(0, 0, 30, 0, 2)], readers=[(0, 15.0, 2.0)])
        g = build_walking_graph(load_floorplan(doc))
        grid = generate_anchor_points(g, 1.0)
        trs = generate_traces(g, 1, 200, 4)
        rs = generate_readings(trs, g, 1.0, 4)
        assert rs
        store, index = ReadingStore([0]), AnchorIndex(grid)
        seen = sorted({int(r.timestamp) for r in rs})
        it = iter(rs)
        pending = next(it, None)
        for t in seen:
            while pending is not None and pending.timestamp < t + 1:
                store.ingest(pending)
                pending = next(it, None)
            snap = index.replace_all(particle_preprocess(store, grid, [0], t, FilterParams(), 4))
            q = GraphLocation(int(np.argmax(g.edge_len)), 0.0)
            assert hit_rate(ground_truth_knn(trs, g, q, 1, t), knn_query(q, 1, snap, grid).objects) == 1.0

    def test_sample_counts(self):
        cfg = ExperimentConfig(n_objects=50, duration=120, warmup=30, backend="uniform")
        rep = run_single(cfg, 1)
        ranges = [s for s in rep.samples if s.query == "range"]
        knns = [s for s in rep.samples if s.query == "knn"]
        assert len(ranges) == 400 and len(knns) == 400
        assert all(s.value >= 0 for s in ranges)
        assert all(0 <= s.value <= 1 for s in knns)

    def test_deterministic_outputs(self, tmp_path):
        cfg = ExperimentConfig(n_objects=10, duration=90, warmup=30, n_windows=4, n_timestamps=4, k=(1, 2))
        paths = [write_outputs(run_experiment(cfg), cfg, tmp_path / name) for name in "ab"]
        assert paths[0]["metrics"].read_bytes() == paths[1]["metrics"].read_bytes()
        assert paths[0]["config"].read_bytes() == paths[1]["config"].read_bytes()

    def test_sweep_labels(self):
        cfg = ExperimentConfig(n_objects=8, duration=80, warmup=30, n_windows=3, n_timestamps=3,
                               backend="pf", sweep="n_particles", values=(8, 16))
        rows = run_experiment(cfg).rows()
        assert {(r[1], r[2]) for r in rows} == {("n_particles", "8"), ("n_particles", "16")}
        buf = io.StringIO()
        run_experiment(cfg).write_metrics(buf)
        assert buf.getvalue().startswith("backend,param,value,metric,mean,stddev,n\n")
        assert not any(math.isnan(r[4]) for r in rows)
