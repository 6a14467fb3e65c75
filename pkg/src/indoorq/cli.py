"""Command-line entry point: simulate, replay, query, experiment."""

from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from .floorplan import (FloorPlanError, Rect, build_walking_graph, generate_anchor_points, load_bundled_plan,
                        load_floorplan, project_to_graph)
from .index import AnchorIndex, dump_index
from .pruning import prune_knn_candidates, prune_range_candidates
from .queries import knn_query, range_query
from .readings import ReadingRejected, ReadingStore, parse_readings, write_readings
from .sim.experiment import (BACKENDS, ConfigError, ExperimentConfig, filter_params, run_backend,
                             run_experiment, write_outputs)
from .sim.sensing import generate_readings
from .sim.traces import generate_traces


class CliError(Exception):
    pass


def _load_config(args, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _load_plan(args, cfg: ExperimentConfig):
    plan = load_floorplan(args.plan) if args.plan else load_bundled_plan()
    return plan.with_activation_range(cfg.activation_range)


def _floats(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} needs {n} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what} must be numeric") from None


def _range_arg(text: str) -> Rect:
    x, y, w, h = _floats(text, 4, "--range")
    if w < 0 or h < 0:
        raise argparse.ArgumentTypeError("--range width and height must be non-negative")
    return Rect(x, y, w, h)


def _knn_arg(text: str) -> tuple[float, float, int]:
    x, y, k = _floats(text, 3, "--knn")
    if k < 1 or k != int(k):
        raise argparse.ArgumentTypeError("--knn k must be a positive integer")
    return x, y, int(k)


def _backends(name: str) -> tuple[str, ...]:
    return BACKENDS if name == "all" else (name,)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load_config(args, seeds=None if args.seed is None else (args.seed,))
    seed = cfg.seeds[0]
    plan = _load_plan(args, cfg)
    graph = build_walking_graph(plan)
    traces = generate_traces(graph, cfg.n_objects, cfg.duration, seed, u_max=cfg.u_max)
    readings = generate_readings(traces, graph, cfg.p_detect, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "traces.csv", "w", newline="") as f:
        f.write("t,object_id,x,y,edge,offset,room\n")
        for tr in traces:
            for t, (loc, xy) in enumerate(zip(tr.locations, tr.xy)):
                if loc.is_room:
                    f.write(f"{t},{tr.object_id},{xy[0]:.3f},{xy[1]:.3f},,,{loc.room}\n")
                else:
                    f.write(f"{t},{tr.object_id},{xy[0]:.3f},{xy[1]:.3f},{loc.edge},{loc.offset:.3f},\n")
    with open(out / "readings.csv", "w", newline="") as f:
        write_readings(readings, f)
    (out / "config.json").write_text(cfg.to_json())
    print(f"{len(traces)} traces, {len(readings)} readings -> {out}")
    return 0


class _Replay:
    """Readings fed in time order, filtered on demand at chosen seconds."""

    def __init__(self, args):
        self.cfg = _load_config(args)
        self.seed = args.seed if args.seed is not None else self.cfg.seeds[0]
        plan = _load_plan(args, self.cfg)
        self.grid = generate_anchor_points(build_walking_graph(plan), self.cfg.anchor_spacing)
        self.graph = self.grid.graph
        self.params = filter_params(self.cfg)
        with open(args.readings) as f:
            self.readings = sorted(parse_readings(f))
        self.store = ReadingStore([r.id for r in self.graph.readers])
        self._pos = 0

    def last_second(self) -> int:
        return int(math.floor(self.readings[-1].timestamp)) if self.readings else 0

    def advance(self, t: int) -> None:
        while self._pos < len(self.readings) and math.floor(self.readings[self._pos].timestamp) <= t:
            self.store.ingest(self.readings[self._pos])
            self._pos += 1

    def snapshot(self, backend: str, t: int, candidates=None):
        cand = self.store.objects if candidates is None else sorted(candidates)
        updates = run_backend(backend, self.store, self.grid, cand, t, self.params, self.seed)
        return AnchorIndex(self.grid).replace_all(updates)


def _times(args, rep: _Replay) -> list[int]:
    times = sorted(set(args.at)) if args.at else [rep.last_second()]
    if any(t < 0 for t in times):
        raise CliError("--at times must be non-negative")
    return times


def cmd_replay(args) -> int:
    rep = _Replay(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t in _times(args, rep):
        rep.advance(t)
        for b in _backends(args.backend):
            snap = rep.snapshot(b, t)
            path = out / f"index_{b}_t{t}.csv"
            with open(path, "w", newline="") as f:
                dump_index(snap, rep.grid, f)
            print(f"{b} t={t}: {len(snap.by_object)} objects -> {path}")
    return 0


def cmd_query(args) -> int:
    if not args.range and not args.knn:
        raise CliError("give at least one --range or --knn query")
    rep = _Replay(args)
    u_max = rep.cfg.u_max
    points = [((x, y), k) for x, y, k in args.knn]
    rows: dict[str, list[str]] = {b: [] for b in _backends(args.backend)}
    for t in _times(args, rep):
        rep.advance(t)
        cand = prune_range_candidates(args.range, rep.store, rep.graph, t, u_max) if args.range else set()
        for xy, k in points:
            cand |= prune_knn_candidates(rep.graph, project_to_graph(rep.graph, xy), k, rep.store, t, u_max)
        for b in rows:
            snap = rep.snapshot(b, t, cand)
            for i, q in enumerate(args.range):
                res = range_query(q, snap, rep.grid)
                rows[b].extend(f"r{i},{t},{o},{res[o]:.9g}" for o in sorted(res))
            for i, (xy, k) in enumerate(points):
                res = knn_query(xy, k, snap, rep.grid).result
                rows[b].extend(f"k{i},{t},{o},{res[o]:.9g}" for o in sorted(res))
    header = "query_id,t,object_id,probability\n"
    if args.out is None:
        for b, lines in rows.items():
            if len(rows) > 1:
                print(f"# backend {b}")
            sys.stdout.write(header + "".join(line + "\n" for line in lines))
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for b, lines in rows.items():
        (out / f"results_{b}.csv").write_text(header + "".join(line + "\n" for line in lines))
    print(f"results for {', '.join(rows)} -> {out}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args, seeds=None if args.seed is None else (args.seed,), backend=args.backend)
    plan = load_floorplan(args.plan) if args.plan else None
    report = run_experiment(cfg, plan)
    paths = write_outputs(report, cfg, args.out)
    print(f"metrics -> {paths['metrics']}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="indoorq", description="RFID cleansing and indoor spatial queries.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--plan", help="floor plan JSON (default: bundled office floor)")
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--seed", type=int, help="random seed")
        sp.add_argument("--out", required=out_required, help="output directory")

    def replay_args(sp):
        sp.add_argument("--readings", required=True, help="readings CSV (timestamp,object_id,reader_id)")
        sp.add_argument("--at", type=int, action="append", default=[],
                        help="second to evaluate at; repeatable (default: last reading)")
        sp.add_argument("--backend", choices=BACKENDS + ("all",), default="pf")

    sp = sub.add_parser("simulate", help="write synthetic traces and readings")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("replay", help="filter readings into anchor index dumps")
    common(sp)
    replay_args(sp)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("query", help="one-shot range and kNN queries on replayed readings")
    common(sp, out_required=False)
    replay_args(sp)
    sp.add_argument("--range", type=_range_arg, action="append", default=[], metavar="X,Y,W,H")
    sp.add_argument("--knn", type=_knn_arg, action="append", default=[], metavar="X,Y,K")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("experiment", help="run an accuracy experiment from a config file")
    common(sp)
    sp.add_argument("--backend", choices=BACKENDS + ("all",))
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, FloorPlanError, ReadingRejected, OSError, ValueError) as exc:
        print(f"indoorq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
