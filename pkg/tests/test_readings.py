"""Reading collector: ENTER detection, eviction, aggregation, windows."""

import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indoorq.readings import RawReading, ReadingRejected, ReadingStore, parse_readings, write_readings

from conftest import feed


def replay_window(raw, obj):
    """Window recomputed from the raw stream: the last two device runs kept.

    Re-entering a retained device starts its run afresh.
    """
    runs = []  # [reader, [seconds]]
    for t, o, r in raw:
        if o != obj:
            continue
        if not runs or runs[-1][0] != r:
            runs = [run for run in runs if run[0] != r][-1:] + [[r, []]]
        runs[-1][1].append(int(t))
    secs = sorted(s for _, ss in runs for s in ss)
    return secs[0], secs[-1], runs[0][0], runs[-1][0]


class TestIngest:
    def test_fresh_object(self):
        s = ReadingStore([1, 2])
        assert s.ingest(RawReading(0.5, 7, 1)) is True
        assert s.dto_obj[1] == {7}
        assert s.aggregated_window(7)[2:4] == (1, 1)

    def test_third_device_evicts_oldest(self):
        s = feed(ReadingStore([1, 2, 3]), [(0, 7, 1), (1, 7, 1), (5, 7, 2), (9, 7, 3)])
        w = s.aggregated_window(7)
        assert (w.t1, w.t2, w.d1, w.d2) == (5, 9, 2, 3)
        assert {e.reader_id for e in w.entries} == {2, 3}
        assert s.dto_obj[1] == set() and s.dto_obj[2] == set() and s.dto_obj[3] == {7}

    def test_aggregation_one_per_second(self):
        s = ReadingStore([1])
        for i in range(30):
            s.ingest(RawReading(4.0 + i / 31, 7, 1))
        assert len(s.entries(7)) == 1

    def test_modal_reader_ties_lowest(self):
        s = ReadingStore([1, 2])
        for t, r in [(3.1, 2), (3.2, 1), (3.3, 2), (3.4, 1)]:
            s.ingest(RawReading(t, 7, r))
        assert s.entries(7)[0].reader_id == 1

    def test_unknown_reader(self):
        with pytest.raises(ReadingRejected):
            ReadingStore([1]).ingest(RawReading(0.0, 7, 9))

    def test_timestamp_regression(self):
        s = feed(ReadingStore([1]), [(5, 7, 1)])
        with pytest.raises(ReadingRejected):
            s.ingest(RawReading(4.0, 7, 1))

    def test_old_entries_expire(self):
        s = feed(ReadingStore([1, 2], max_age=120), [(0, 7, 1), (200, 7, 2)])
        assert s.aggregated_window(7).t1 == 200
        assert s.device_count(7) == 1


class TestWindow:
    def test_two_devices(self):
        seq = [(t, 7, 1) for t in (3, 4, 5)] + [(t, 7, 2) for t in (10, 11, 12)]
        w = feed(ReadingStore([1, 2]), seq).aggregated_window(7)
        assert (w.t1, w.t2, w.d1, w.d2) == (3, 12, 1, 2)

    def test_single_device(self):
        w = feed(ReadingStore([2]), [(4, 7, 2), (6, 7, 2)]).aggregated_window(7)
        assert (w.t1, w.t2, w.d1, w.d2) == (4, 6, 2, 2)

    def test_unknown_object(self):
        assert ReadingStore([1]).aggregated_window(3) is None

    def test_after_eviction_matches_replay(self):
        raw = [(0, 7, 1), (2, 7, 2), (3, 7, 2), (8, 7, 3), (9, 7, 3)]
        w = feed(ReadingStore([1, 2, 3]), raw).aggregated_window(7)
        assert (w.t1, w.t2, w.d1, w.d2) == replay_window(raw, 7)


class TestLatestDetection:
    def test_lookup(self):
        s = feed(ReadingStore([1, 2]), [(3, 7, 1), (12, 7, 2)])
        assert s.latest_detection(7) == (2, 12)

    def test_never_read(self):
        assert ReadingStore([1]).latest_detection(7) is None

    def test_isolation(self):
        s = feed(ReadingStore([1, 2]), [(1, 7, 1), (2, 8, 2), (3, 7, 2), (4, 8, 1)])
        assert s.latest_detection(7) == (2, 3)
        assert s.latest_detection(8) == (1, 4)


class TestFormat:
    def test_roundtrip(self):
        rs = [RawReading(0.25, 1, 2), RawReading(1.5, 3, 4)]
        buf = io.StringIO()
        write_readings(rs, buf)
        assert list(parse_readings(buf.getvalue().splitlines())) == rs

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            list(parse_readings(["timestamp,object_id,reader_id", "1,2"]))


readings_strategy = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=1, max_size=60
)


class TestProperties:
    @settings(max_examples=300, deadline=None)
    @given(readings_strategy)
    def test_at_most_two_devices(self, steps):
        s = ReadingStore(range(5))
        for i, (obj, r) in enumerate(steps):
            s.ingest(RawReading(float(i), obj, r))
            assert all(s.device_count(o) <= 2 for o in s.objects)
            # every object sits under exactly one reader in DtoObj
            members = [o for objs in s.dto_obj.values() for o in objs]
            assert sorted(members) == s.objects

    @settings(max_examples=200, deadline=None)
    @given(readings_strategy)
    def test_replay_deterministic(self, steps):
        raws = [RawReading(float(i), o, r) for i, (o, r) in enumerate(steps)]
        a, b = ReadingStore(range(5)), ReadingStore(range(5))
        a.ingest_many(raws)
        b.ingest_many(raws)
        assert a.snapshot() == b.snapshot()

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=40))
    def test_window_matches_replay(self, readers):
        raw = [(i, 7, r) for i, r in enumerate(readers)]
        w = feed(ReadingStore(range(5)), raw).aggregated_window(7)
        assert (w.t1, w.t2, w.d1, w.d2) == replay_window(raw, 7)
