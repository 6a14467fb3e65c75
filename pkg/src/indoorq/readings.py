"""Event-driven raw reading collector.

Keeps, for every object, the one-second aggregated readings of its two most
recent detecting devices, plus the reader -> objects map of latest
detections.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, TextIO


class ReadingRejected(ValueError):
    pass


class RawReading(NamedTuple):
    timestamp: float
    object_id: int
    reader_id: int


class AggregatedReading(NamedTuple):
    object_id: int
    second: int
    reader_id: int | None


class Window(NamedTuple):
    t1: int
    t2: int
    d1: int
    d2: int
    entries: list[AggregatedReading]


@dataclass
class _ObjectBuffer:
    devices: list[int] = field(default_factory=list)  # oldest first, at most 2
    seconds: dict[int, Counter] = field(default_factory=dict)
    last_reader: int | None = None
    last_time: float = -math.inf
    last_second: int = -1


class ReadingStore:
    """Per-object reading buffer with ENTER detection and eviction.

    ``ingest`` returns True when the reading is an ENTER event, i.e. the
    object was previously unseen or last seen by a different reader.
    """

    def __init__(self, reader_ids: Iterable[int], max_age: int = 120):
        self.reader_ids = frozenset(reader_ids)
        self.max_age = max_age
        self._objects: dict[int, _ObjectBuffer] = {}
        self.dto_obj: dict[int, set[int]] = {r: set() for r in self.reader_ids}

    def __contains__(self, object_id: int) -> bool:
        return object_id in self._objects

    @property
    def objects(self) -> list[int]:
        return sorted(self._objects)

    def ingest(self, reading: RawReading) -> bool:
        t, obj, reader = reading
        if reader not in self.reader_ids:
            raise ReadingRejected(f"unknown reader {reader}")
        buf = self._objects.get(obj)
        if buf is None:
            buf = self._objects[obj] = _ObjectBuffer()
        elif t < buf.last_time:
            raise ReadingRejected(
                f"timestamp regression for object {obj}: {t} < {buf.last_time}")
        sec = int(math.floor(t))
        enter = buf.last_reader != reader
        if enter:
            if reader in buf.devices:
                # re-entering the older device: its earlier run is no longer consecutive
                self._drop_reader(buf, reader)
                buf.devices.remove(reader)
            elif len(buf.devices) == 2:
                self._drop_reader(buf, buf.devices.pop(0))
            buf.devices.append(reader)
            if buf.last_reader is not None:
                self.dto_obj[buf.last_reader].discard(obj)
            self.dto_obj[reader].add(obj)
        buf.seconds.setdefault(sec, Counter())[reader] += 1
        buf.last_reader = reader
        buf.last_time = t
        buf.last_second = sec
        self._expire(buf, sec)
        return enter

    def ingest_many(self, readings: Iterable[RawReading]) -> list[tuple[int, int]]:
        """Ingest a batch; returns the (object, reader) ENTER events it caused."""
        events = []
        for r in readings:
            if self.ingest(r):
                events.append((r.object_id, r.reader_id))
        return events

    @staticmethod
    def _drop_reader(buf: _ObjectBuffer, reader: int) -> None:
        for sec in list(buf.seconds):
            c = buf.seconds[sec]
            c.pop(reader, None)
            if not c:
                del buf.seconds[sec]

    def _expire(self, buf: _ObjectBuffer, now: int) -> None:
        cutoff = now - self.max_age
        if buf.seconds and min(buf.seconds) < cutoff:
            for sec in [s for s in buf.seconds if s < cutoff]:
                del buf.seconds[sec]
            present = {r for c in buf.seconds.values() for r in c}
            buf.devices = [d for d in buf.devices if d in present]

    def entries(self, object_id: int) -> list[AggregatedReading]:
        buf = self._objects.get(object_id)
        if buf is None:
            return []
        out = []
        for sec in sorted(buf.seconds):
            c = buf.seconds[sec]
            # modal reader, ties to the lowest id
            reader = min(c, key=lambda r: (-c[r], r))
            out.append(AggregatedReading(object_id, sec, reader))
        return out

    def aggregated_window(self, object_id: int) -> Window | None:
        buf = self._objects.get(object_id)
        if buf is None or not buf.seconds:
            return None
        entries = self.entries(object_id)
        d2 = buf.devices[-1]
        d1 = buf.devices[0] if len(buf.devices) == 2 else d2
        return Window(entries[0].second, entries[-1].second, d1, d2, entries)

    def latest_detection(self, object_id: int) -> tuple[int, int] | None:
        buf = self._objects.get(object_id)
        if buf is None:
            return None
        return (buf.last_reader, buf.last_second)

    def in_range_at(self, object_id: int, second: int) -> bool:
        """Whether the object was seen during ``second``; absence the next second is a LEAVE."""
        buf = self._objects.get(object_id)
        return buf is not None and second in buf.seconds

    def device_count(self, object_id: int) -> int:
        buf = self._objects.get(object_id)
        return 0 if buf is None else len({r for c in buf.seconds.values() for r in c})

    def snapshot(self) -> dict:
        """Plain-data view of the whole buffer, for determinism checks."""
        return {
            o: (tuple(b.devices), tuple(self.entries(o)), b.last_reader, b.last_second)
            for o, b in sorted(self._objects.items())
        }


def parse_readings(lines: Iterable[str]) -> Iterator[RawReading]:
    """Parse ``timestamp,object_id,reader_id`` lines; blank lines and a header are skipped."""
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {n}: expected 3 fields, got {len(parts)}")
        if n == 1 and parts[0].strip() == "timestamp":
            continue
        yield RawReading(float(parts[0]), int(parts[1]), int(parts[2]))


def write_readings(readings: Iterable[RawReading], out: TextIO) -> None:
    out.write("timestamp,object_id,reader_id\n")
    for r in readings:
        out.write(f"{r.timestamp:.3f},{r.object_id},{r.reader_id}\n")
