"""Command-line interface.

Subcommands: simulate (closed navigation loop), train (replay a scan log
into a model), check (segment/curve verdicts), eval (map quality vs. a
world), bench (timing). Verdicts go to stdout, logs to stderr, artifacts to
files. Exit codes: 0 success/free/reached, 1 colliding/not-reached,
2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .collision import (
    BoundMode,
    PolyCurve,
    Segment,
    check_curve,
    check_segment,
    free_ball_radius,
    ray_free_time,
    StartInCollisionError,
)
from .config import ConfigError, RunConfig, load_config
from .evaluation import (
    TIMING_FIELDS,
    TRAINING_FIELDS,
    baseline_endpoint_grid,
    map_accuracy,
    accumulate_observed,
    timing_bench,
    training_bench,
    write_csv,
)
from .geometry import read_scan_log, write_scan_log
from .model import ModelFormatError, SupportVectorModel
from .pipeline import generate_batch
from .planner import GoalRegion
from .sim import GroundTruthGrid, SceneError, SimState, build_world, run_navigation

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _load_config(path: str | None) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_simulate(args) -> int:
    try:
        cfg = _load_config(args.config)
        world = build_world(args.scene)
    except (ConfigError, SceneError) as e:
        return _fail(str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episode = cfg.episode
    log = run_navigation(
        world,
        SimState(position=episode.start, heading=episode.heading),
        GoalRegion(center=episode.goal_center, radius=episode.goal_radius),
        cfg.navigation(),
    )
    with open(out / "scans.jsonl", "w") as fp:
        write_scan_log(fp, [(i * cfg.sim.scan_period, s) for i, s in enumerate(log.scans)])
    with open(out / "episode.jsonl", "w") as fp:
        for rec in log.cycles:
            fp.write(json.dumps(rec.to_json()) + "\n")
    (out / "model.json").write_text(log.model.to_json())
    summary = {
        "reached": log.reached,
        "aborted": log.aborted,
        "cycles": len(log.cycles),
        "violations": log.violation_count,
        "path_length": log.path_length,
        "sv_count": log.model.num_support_vectors,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return EXIT_OK if log.reached and log.violation_count == 0 else EXIT_NEGATIVE


def cmd_train(args) -> int:
    try:
        cfg = _load_config(args.config)
        with open(args.scan_log) as fp:
            records = read_scan_log(fp)
    except (ConfigError, OSError, ValueError, KeyError) as e:
        return _fail(f"cannot read inputs: {e}")
    model = SupportVectorModel(dim=2, kernel=cfg.kernel, approx_k=cfg.approx_k)
    rows = training_bench(
        [scan for _, scan in records],
        cfg.grid,
        model,
        training=cfg.training,
        augment=cfg.augment,
        radius=cfg.robot.radius,
    )
    Path(args.out).write_text(model.to_json())
    if args.report:
        with open(args.report, "w") as fp:
            write_csv(fp, TRAINING_FIELDS, rows)
    print(json.dumps({"scans": len(rows), "sv_count": model.num_support_vectors}))
    return EXIT_OK


def _parse_geometry(path: str):
    with open(path) as fp:
        doc = json.load(fp)
    kind = doc.get("type")
    if kind == "segment":
        return Segment(a=tuple(doc["a"]), b=tuple(doc["b"])), None
    if kind == "curve":
        return None, PolyCurve(coefficients=doc["coefficients"], horizon=doc["horizon"])
    raise ValueError(f"geometry type must be 'segment' or 'curve', got {kind!r}")


def cmd_check(args) -> int:
    try:
        model = SupportVectorModel.from_json(Path(args.model).read_text())
        seg, curve = _parse_geometry(args.geometry)
    except (OSError, ModelFormatError, ValueError, KeyError) as e:
        return _fail(f"invalid model or geometry: {e}")
    knn = None if args.no_approx else tuple(args.approx_k)
    mode = BoundMode(kind="single" if args.mode == "single-j" else "minimax", knn_limit=knn)
    detail: dict = {"mode": args.mode, "knn_limit": knn}
    if seg is not None:
        free = check_segment(seg, model, mode)
        if model.num_positive and model.num_negative:
            a = np.asarray(seg.a)
            b = np.asarray(seg.b)
            for name, s0, v in (("t_u_a", a, b - a), ("t_u_b", b, a - b)):
                try:
                    detail[name] = ray_free_time(s0, v, model, mode)
                except StartInCollisionError:
                    detail[name] = None
    else:
        free = check_curve(curve, args.epsilon, model, mode)
        try:
            detail["first_ball_radius"] = free_ball_radius(curve.position(0.0), model, mode)
        except (StartInCollisionError, ValueError):
            detail["first_ball_radius"] = None
    print("FREE" if free else "COLLIDING")
    print(json.dumps(detail))
    return EXIT_OK if free else EXIT_NEGATIVE


def cmd_eval(args) -> int:
    try:
        cfg = _load_config(args.config)
        model = SupportVectorModel.from_json(Path(args.model).read_text(), approx_k=cfg.approx_k)
        world = GroundTruthGrid.load(args.world)
    except (ConfigError, OSError, ModelFormatError, ValueError) as e:
        return _fail(str(e))
    observed = None
    baseline = None
    if args.scan_log:
        try:
            with open(args.scan_log) as fp:
                scans = [scan for _, scan in read_scan_log(fp)]
        except (OSError, ValueError, KeyError) as e:
            return _fail(f"cannot read scan log: {e}")
        observed = accumulate_observed(scans, world.geometry, args.radius)
        occ_cells, total_cells, _ = baseline_endpoint_grid(scans, world.geometry)
        baseline = {"occupied_cells": occ_cells, "total_cells": total_cells}
    rows = []
    for variant, upper, approx in (
        ("kernel", False, False),
        ("kernel-approx", False, True),
        ("inflated", True, False),
    ):
        for scope, mask in (("all", None), ("observed", observed)):
            if scope == "observed" and observed is None:
                continue
            rep = map_accuracy(
                model, world, radius=args.radius, use_upper_bound=upper,
                approximate=approx, observed_mask=mask,
            )
            rows.append(
                {
                    "variant": f"{variant}/{scope}",
                    "accuracy": rep.accuracy,
                    "recall": rep.recall,
                    "vectors": rep.sv_count,
                    "storage": rep.storage_bytes,
                }
            )
    summary = {"rows": rows}
    if baseline:
        summary["baseline"] = baseline
    Path(args.out).write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = _load_config(args.config)
        model = SupportVectorModel.from_json(Path(args.model).read_text(), approx_k=cfg.approx_k)
    except (ConfigError, OSError, ModelFormatError) as e:
        return _fail(str(e))
    mode = BoundMode(kind=cfg.mode_kind, knn_limit=cfg.segment_knn)
    rows = timing_bench(
        model,
        lengths=args.lengths,
        trials=args.trials,
        mode=mode,
        deltas=args.deltas,
        seed=cfg.seed,
    )
    with open(args.out, "w") as fp:
        write_csv(fp, TIMING_FIELDS, rows)
    print(json.dumps({"rows": len(rows)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kernelmap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the closed mapping/navigation loop")
    sim.add_argument("--config", default=None)
    sim.add_argument("--scene", required=True)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("train", help="build a model from a scan log")
    tr.add_argument("--scan-log", required=True)
    tr.add_argument("--config", default=None)
    tr.add_argument("--out", required=True)
    tr.add_argument("--report", default=None, help="per-scan CSV report path")
    tr.set_defaults(func=cmd_train)

    ck = sub.add_parser("check", help="collision-check a segment or curve")
    ck.add_argument("--model", required=True)
    ck.add_argument("--geometry", required=True, help="JSON segment/curve file")
    ck.add_argument("--mode", choices=["single-j", "minimax"], default="minimax")
    ck.add_argument("--approx-k", type=int, nargs=2, default=(10, 10))
    ck.add_argument("--no-approx", action="store_true")
    ck.add_argument("--epsilon", type=float, default=0.2)
    ck.set_defaults(func=cmd_check)

    ev = sub.add_parser("eval", help="map accuracy/recall against a world file")
    ev.add_argument("--model", required=True)
    ev.add_argument("--world", required=True)
    ev.add_argument("--config", default=None)
    ev.add_argument("--scan-log", default=None)
    ev.add_argument("--radius", type=float, default=0.0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    be = sub.add_parser("bench", help="collision-check timing benchmark")
    be.add_argument("--model", required=True)
    be.add_argument("--config", default=None)
    be.add_argument("--trials", type=int, default=100)
    be.add_argument("--lengths", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0, 8.0])
    be.add_argument("--deltas", type=float, nargs="+", default=[0.01])
    be.add_argument("--out", required=True)
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SceneError, ModelFormatError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
