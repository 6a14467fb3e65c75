"""Anchor -> (object, probability) index with generation snapshots.

Writers stage per-object entries into the next generation during a commit
phase; ``publish`` swaps it in atomically. Readers hold an
:class:`IndexSnapshot`, which never changes after it is taken.
"""

from __future__ import annotations

import threading
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import TextIO

from .floorplan import AnchorGrid

DROP_BELOW = 1e-9
MASS_TOL = 1e-6


class IndexError_(ValueError):
    pass


@dataclass(frozen=True)
class IndexSnapshot:
    """Immutable view of one published generation."""

    generation: int
    n_anchors: int
    by_anchor: Mapping[int, tuple[tuple[int, float], ...]]
    by_object: Mapping[int, tuple[tuple[int, float], ...]]

    def get(self, anchor: int) -> list[tuple[int, float]]:
        if not 0 <= anchor < self.n_anchors:
            raise IndexError_(f"unknown anchor {anchor}")
        return list(self.by_anchor.get(anchor, ()))

    def objects(self) -> list[int]:
        return sorted(self.by_object)

    def object_mass(self, obj: int) -> float:
        return sum(p for _, p in self.by_object.get(obj, ()))

    def populated_anchors(self) -> list[int]:
        return sorted(self.by_anchor)


class AnchorIndex:
    """Double-buffered index; one committer, any number of snapshot readers."""

    def __init__(self, grid: AnchorGrid):
        self.grid = grid
        self._lock = threading.Lock()
        self._current = IndexSnapshot(0, grid.n_anchors, {}, {})
        self._staged: dict[int, tuple[tuple[int, float], ...]] | None = None

    @property
    def generation(self) -> int:
        return self._current.generation

    def snapshot(self) -> IndexSnapshot:
        return self._current

    def get(self, anchor: int) -> list[tuple[int, float]]:
        return self._current.get(anchor)

    # -- commit phase ------------------------------------------------------

    def begin(self) -> None:
        """Open a commit phase seeded with the published generation."""
        if self._staged is not None:
            raise RuntimeError("commit phase already open")
        self._staged = dict(self._current.by_object)

    def commit_object(self, obj: int, entries: Iterable[tuple[int, float]]) -> None:
        """Replace every entry of ``obj`` in the staged generation."""
        auto = self._staged is None
        if auto:
            self.begin()
        try:
            merged: dict[int, float] = {}
            for a, p in entries:
                a = int(a)
                p = float(p)
                if not 0 <= a < self.grid.n_anchors:
                    raise IndexError_(f"unknown anchor {a}")
                if not 0.0 <= p <= 1.0:
                    raise IndexError_(f"probability {p} outside [0, 1] for object {obj}")
                merged[a] = merged.get(a, 0.0) + p
            kept = tuple(sorted((a, p) for a, p in merged.items() if p >= DROP_BELOW))
            total = sum(p for _, p in kept)
            if total > 1.0 + MASS_TOL:
                raise IndexError_(f"object {obj} carries mass {total} > 1")
            if kept:
                self._staged[int(obj)] = kept
            else:
                self._staged.pop(int(obj), None)
        except Exception:
            if auto:
                self._staged = None
            raise
        if auto:
            self.publish()

    def remove_object(self, obj: int) -> None:
        self.commit_object(obj, [])

    def commit_many(self, updates: Mapping[int, Iterable[tuple[int, float]]]) -> None:
        for obj in sorted(updates):
            self.commit_object(obj, updates[obj])

    def publish(self) -> IndexSnapshot:
        """Swap the staged generation in and return it."""
        if self._staged is None:
            raise RuntimeError("no commit phase open")
        by_anchor: dict[int, list[tuple[int, float]]] = {}
        for obj in sorted(self._staged):
            for a, p in self._staged[obj]:
                by_anchor.setdefault(a, []).append((obj, p))
        snap = IndexSnapshot(
            self._current.generation + 1, self.grid.n_anchors,
            {a: tuple(v) for a, v in by_anchor.items()}, dict(self._staged),
        )
        with self._lock:
            self._current = snap
            self._staged = None
        return snap

    def abort(self) -> None:
        self._staged = None

    def replace_all(self, updates: Mapping[int, Iterable[tuple[int, float]]],
                    keep_others: bool = False) -> IndexSnapshot:
        """One full commit phase: optionally clear, apply ``updates``, publish."""
        self.begin()
        if not keep_others:
            self._staged = {}
        try:
            self.commit_many(updates)
        except Exception:
            self.abort()
            raise
        return self.publish()


def dump_index(snap: IndexSnapshot, grid: AnchorGrid, out: TextIO) -> None:
    """Write ``anchor_id,x,y,object_id,probability`` rows."""
    out.write("anchor_id,x,y,object_id,probability\n")
    for a in snap.populated_anchors():
        x, y = grid.xy[a]
        for obj, p in snap.by_anchor[a]:
            out.write(f"{a},{x:.3f},{y:.3f},{obj},{p:.9g}\n")
