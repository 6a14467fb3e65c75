"""Shared fixtures and small plan builders."""

from __future__ import annotations

import pytest

from indoorq.floorplan import build_walking_graph, generate_anchor_points, load_bundled_plan, load_floorplan
from indoorq.readings import RawReading, ReadingStore


def plan_doc(hallways, rooms=(), readers=(), doors=None):
    """Floor-plan document from compact tuples.

    hallways: (x0, y0, x1, y1, width); rooms: (x, y, w, h, hallway, position)
    with one door each; readers: (hallway, position, range).
    """
    doc = {"hallways": [], "rooms": [], "doors": [], "readers": []}
    for i, (x0, y0, x1, y1, w) in enumerate(hallways):
        doc["hallways"].append({"id": i, "x0": x0, "y0": y0, "x1": x1, "y1": y1, "width": w})
    for i, (x, y, w, h, hid, pos) in enumerate(rooms):
        doc["rooms"].append({"id": i, "x": x, "y": y, "w": w, "h": h, "doors": [i]})
        doc["doors"].append({"id": i, "room_id": i, "hallway_id": hid, "position": pos})
    for i, (hid, pos, r) in enumerate(readers):
        doc["readers"].append({"id": i, "hallway_id": hid, "position": pos, "activation_range": r})
    return doc


def make_grid(doc, spacing=1.0):
    return generate_anchor_points(build_walking_graph(load_floorplan(doc)), spacing)


def feed(store: ReadingStore, seq):
    """Ingest (second, object, reader) triples as readings at the start of each second."""
    for t, obj, reader in seq:
        store.ingest(RawReading(float(t), obj, reader))
    return store


@pytest.fixture(scope="session")
def bundled_plan():
    return load_bundled_plan()


@pytest.fixture(scope="session")
def bundled_graph(bundled_plan):
    return build_walking_graph(bundled_plan)


@pytest.fixture(scope="session")
def bundled_grid(bundled_graph):
    return generate_anchor_points(bundled_graph, 1.0)


@pytest.fixture(scope="session")
def corridor_grid():
    """A 40 m corridor with two readers and two rooms between them."""
    doc = plan_doc(
        hallways=[(0.0, 0.0, 40.0, 0.0, 2.0)],
        rooms=[(12.0, 1.0, 4.0, 4.0, 0, 14.0), (24.0, 1.0, 4.0, 4.0, 0, 26.0)],
        readers=[(0, 5.0, 2.0), (0, 35.0, 2.0)],
    )
    return make_grid(doc)


# one "CRITERION n: ..." line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
