"""Kalman location inference: routes, prediction, pruning, update, discretisation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from indoorq.floorplan import GraphLocation
from indoorq.kalman import (GaussianBelief, PathHypothesis, Route, _Pieces, enumerate_paths,
                            forward_pieces, kalman_gain, kalman_object, kalman_preprocess,
                            kalman_update, predict, prune_hypotheses, route_point, travel_interval)
from indoorq.params import FilterParams
from indoorq.readings import ReadingStore
from indoorq.sim.experiment import ExperimentConfig, build_world

from conftest import feed, make_grid, plan_doc
from oracles import densified_floyd_warshall


def hyp(j=0, mean=0.0, var=1.0, route=None):
    route = route or Route(((0, 0.0, 30.0),), (), (), 30.0)
    return PathHypothesis(route, j, GaussianBelief(mean, var, route))


class TestUpdate:
    def test_worked_example(self):
        post = kalman_update(GaussianBelief(14.0, 3.0), 10.0, 2.0)
        assert kalman_gain(3.0, 2.0) == pytest.approx(0.6, abs=1e-12)
        assert post.mean == pytest.approx(11.6, abs=1e-12)
        assert post.variance == pytest.approx(1.2, abs=1e-12)

    def test_uninformative_measurement(self):
        post = kalman_update(GaussianBelief(5.0, 2.0), 100.0, 1e12)
        assert post.mean == pytest.approx(5.0, abs=1e-9)
        assert post.variance == pytest.approx(2.0, rel=1e-9)

    def test_equal_variances(self):
        post = kalman_update(GaussianBelief(7.0, 4.0), 7.0, 4.0)
        assert (post.mean, post.variance) == (7.0, 2.0)

    def test_bad_measurement_variance(self):
        with pytest.raises(ValueError):
            kalman_update(GaussianBelief(0.0, 1.0), 0.0, 0.0)

    @settings(max_examples=300)
    @given(st.floats(-50, 50), st.floats(1e-3, 100), st.floats(-50, 50), st.floats(1e-3, 100))
    def test_posterior_variance_shrinks(self, m, v, z, r):
        post = kalman_update(GaussianBelief(m, v), z, r)
        assert post.variance < min(v, r)
        assert min(m, z) - 1e-9 <= post.mean <= max(m, z) + 1e-9


class TestPredict:
    def test_arithmetic(self):
        h = predict(hyp(0, 0.0, 1.0), 0, 10, 1.0, 0.1, 10.0)
        assert h.belief.mean == pytest.approx(10.0)
        assert h.belief.variance == pytest.approx(1.1)
        assert h.feasible

    def test_one_room_eats_all_time(self):
        h = predict(hyp(1), 0, 10, 1.0, 0.1, 10.0)
        assert h.belief.mean == 0.0 and h.feasible

    def test_two_rooms_infeasible(self):
        assert not predict(hyp(2), 0, 10, 1.0, 0.1, 10.0).feasible

    @settings(max_examples=200)
    @given(st.floats(0.01, 100), st.floats(0.01, 100))
    def test_variance_linear_in_time(self, a, b):
        h = hyp()
        va = predict(h, 0, a, 1.0, 0.1, 10.0).belief.variance
        vab = predict(h, 0, a + b, 1.0, 0.1, 10.0).belief.variance
        assert vab - va == pytest.approx(0.01 * b, rel=1e-9, abs=1e-12)


class TestEnumeratePaths:
    def test_straight_hallway_two_doors(self, corridor_grid):
        g = corridor_grid.graph
        routes = enumerate_paths(g, g.readers[0].location, g.readers[1].location)
        assert len(routes) == 1
        assert routes[0].m == 2
        assert routes[0].length == pytest.approx(30.0)

    def test_loop_gives_two_routes(self):
        doc = plan_doc([(0, 0, 10, 0, 2), (0, 10, 10, 10, 2), (0, 0, 0, 10, 2), (10, 0, 10, 10, 2)],
                       readers=[(0, 5.0, 1.0), (1, 5.0, 1.0)])
        g = make_grid(doc).graph
        routes = enumerate_paths(g, g.readers[0].location, g.readers[1].location)
        assert len(routes) == 2
        assert all(r.length == pytest.approx(20.0) for r in routes)

    def test_same_location(self, corridor_grid):
        g = corridor_grid.graph
        (r,) = enumerate_paths(g, g.readers[0].location, g.readers[0].location)
        assert r.length == 0.0

    def test_bundled_lengths_match_floyd_warshall(self, bundled_grid):
        g = bundled_grid.graph
        locs = [r.location for r in g.readers]
        D = densified_floyd_warshall(g, locs)
        rng = np.random.default_rng(4)
        for _ in range(30):
            i, j = rng.choice(len(locs), 2, replace=False)
            for r in enumerate_paths(g, locs[i], locs[j]):
                legs = sum(abs(b - a) for _, a, b in r.legs)
                assert legs == pytest.approx(D[i, j], abs=1e-6)
                assert r.length == pytest.approx(D[i, j], abs=1e-6)


class TestPrune:
    interval = (28.0, 32.0)

    def test_full_mass_survives(self):
        (h,) = prune_hypotheses([hyp(0, 30.0, 0.1)], self.interval, 0.05)
        assert h.weight == 1.0

    def test_two_survivors_split(self):
        kept = prune_hypotheses([hyp(0, 30.0, 1.0), hyp(1, 29.0, 1.0)], self.interval, 0.05)
        assert [h.weight for h in kept] == [0.5, 0.5]

    def test_room_detours_pruned(self):
        # 30 s between readers 30 m apart: only the no-room hypothesis reaches d2
        hs = [predict(hyp(j, 0.0, 2.0), 0, 30, 1.0, 0.1, 10.0) for j in range(3)]
        kept = prune_hypotheses(hs, self.interval, 0.05)
        assert [h.rooms_entered for h in kept] == [0]

    def test_no_survivor_keeps_best(self):
        kept = prune_hypotheses([hyp(0, 0.0, 1.0), hyp(1, 20.0, 1.0)], self.interval, 0.05)
        assert [h.rooms_entered for h in kept] == [1]
        assert kept[0].weight == 1.0

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            prune_hypotheses([hyp()], self.interval, 1.5)

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(0, 60), st.floats(0.1, 10)), min_size=1, max_size=8))
    def test_weights_sum_to_one(self, specs):
        hs = [hyp(0, m, v) for m, v in specs]
        kept = prune_hypotheses(hs, self.interval, 0.05)
        assert 1 <= len(kept) <= len(hs)
        assert sum(h.weight for h in kept) == pytest.approx(1.0)


class TestDiscretisation:
    def test_anchor_interval_mass(self):
        p = _Pieces()
        p.add(3, 12.0, 16.0, 1.0)
        std = math.sqrt(1.45)
        m = p.integrate(11.6, std, 5)
        assert m[3] == pytest.approx(norm.cdf(16, 11.6, std) - norm.cdf(12, 11.6, std), abs=1e-12)

    def test_point_mass_on_bracketing_anchor(self, corridor_grid):
        grid = corridor_grid
        p = _Pieces()
        # walk from the first reader towards the far end
        e, off = grid.graph.readers[0].location.edge, grid.graph.readers[0].location.offset
        forward_pieces(grid, p, e, off, 1, 0.0, 1.0, 60.0, FilterParams(room_entry_prob=0.0))
        m = p.integrate(3.4, 1e-6, grid.n_anchors)
        (a,) = np.flatnonzero(m > 1e-9)
        assert m[a] == pytest.approx(1.0)
        assert grid.xy[a][0] == pytest.approx(8.0)  # 5 + 3.4 lies in [8, 9)

    def test_route_point_on_node_resolves_to_arriving_leg(self):
        r = Route(((0, 2.0, 5.0), (1, 0.0, 4.0)), (7,), (), 7.0)
        assert route_point(r, -4.0) == (0, 5.0, 1)
        assert route_point(r, -1.0) == (1, 3.0, 1)


def _two_reader_store(grid, d1_secs, d2_secs):
    seq = [(t, 1, 0) for t in d1_secs] + [(t, 1, 1) for t in d2_secs]
    return feed(ReadingStore([0, 1]), seq)


class TestPreprocess:
    def test_travel_interval(self, corridor_grid):
        s = _two_reader_store(corridor_grid, [0, 1, 2], [33, 34, 35])
        assert travel_interval(s.aggregated_window(1)) == (2, 33)

    def test_single_object_mass(self, corridor_grid):
        s = _two_reader_store(corridor_grid, [0, 1, 2], [32, 33])
        res = kalman_object(s, corridor_grid, 1, 40)
        assert res.masses.sum() == pytest.approx(1.0, abs=1e-6)
        # the object keeps walking past d2 towards the corridor end
        xs = corridor_grid.xy[:, 0]
        mean_x = float((res.masses * xs).sum())
        assert mean_x > 35.0

    def test_single_device_spreads_both_ways(self, corridor_grid):
        s = feed(ReadingStore([0, 1]), [(t, 1, 0) for t in (3, 4)])
        res = kalman_object(s, corridor_grid, 1, 4)
        assert res.posterior is None
        assert res.masses.sum() == pytest.approx(1.0, abs=1e-6)

    def test_mass_conservation_on_simulation(self):
        cfg = ExperimentConfig(n_objects=30, duration=200, warmup=50)
        world = build_world(cfg, 11)
        store = ReadingStore([r.id for r in world.grid.graph.readers])
        store.ingest_many(r for r in world.readings if r.timestamp < 150)
        out = kalman_preprocess(store, world.grid, store.objects, 150)
        assert out
        for entries in out.values():
            assert sum(p for _, p in entries) == pytest.approx(1.0, abs=1e-6)

    def test_unknown_object(self, corridor_grid):
        assert kalman_object(ReadingStore([0, 1]), corridor_grid, 9, 10) is None


def test_location_type():
    assert GraphLocation.in_room(3).is_room
