"""Command-line entry point.

Subcommands tie the library into reproducible workflows: ``simulate`` writes
the bending-model table and example curves, ``phantom`` materializes a
synthetic volume with gold centerlines and seeds, ``segment`` runs the
engine over a seed file, and ``evaluate`` scores trajectories against gold.
Every command drops a manifest JSON capturing config, inputs and timings.

Exit codes: 0 success, 2 usage, 3 input format, 4 partial segmentation
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SegmentationConfig, Trajectory, load_trajectory, \
    save_trajectory, segment_catheter
from .evaluation import ExperimentReport, score_catheter, write_scores_csv, \
    write_summary_json, write_overlay_json
from .features import FeatureMask
from .phantom import generate_phantom, load_phantom_spec
from .spring import SpringModelParams, build_model_table, export_table_csv, \
    find_max_force, simulate_forward
from .volume import TruncatedVolumeError, VolumeFormatError, load_seeds, \
    load_volume, save_seeds, save_volume

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_PARTIAL = 4

_CONFIG_DEFAULTS = {
    "n_c": 8,
    "d_tol": 1.0,
    "r_cone": 20.0,
    "n_rays": 600,
    "ray_step": None,
    "ring_radius": 1.6,
    "n_ring_samples": 8,
    "k_a": 2050.0,
    "n_seg": 20,
    "total_length": 187.0,
    "table_f_samples": 200,
    "table_resolution": 100,
    "eq4_literal": False,
}


def config_from_dict(doc: dict) -> SegmentationConfig:
    merged = {**_CONFIG_DEFAULTS, **doc}
    unknown = set(doc) - set(_CONFIG_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    d_tol = merged["d_tol"]
    if isinstance(d_tol, str):
        d_tol = math.inf if d_tol == "inf" else float(d_tol)
    return SegmentationConfig(
        n_c=int(merged["n_c"]), d_tol=float(d_tol), r_cone=float(merged["r_cone"]),
        mask=FeatureMask(ring_radius=float(merged["ring_radius"]),
                         n_ring_samples=int(merged["n_ring_samples"])),
        n_rays=int(merged["n_rays"]),
        ray_step=None if merged["ray_step"] is None else float(merged["ray_step"]),
        model=SpringModelParams(k_a=float(merged["k_a"]), n_seg=int(merged["n_seg"]),
                                total_length=float(merged["total_length"])),
        table_f_samples=int(merged["table_f_samples"]),
        table_resolution=int(merged["table_resolution"]),
        eq4_literal=bool(merged["eq4_literal"]))


def config_to_dict(config: SegmentationConfig) -> dict:
    return {
        "n_c": config.n_c,
        "d_tol": "inf" if math.isinf(config.d_tol) else config.d_tol,
        "r_cone": config.r_cone,
        "n_rays": config.n_rays,
        "ray_step": config.ray_step,
        "ring_radius": config.mask.ring_radius,
        "n_ring_samples": config.mask.n_ring_samples,
        "k_a": config.model.k_a,
        "n_seg": config.model.n_seg,
        "total_length": config.model.total_length,
        "table_f_samples": config.table_f_samples,
        "table_resolution": config.table_resolution,
        "eq4_literal": config.eq4_literal,
    }


def _write_manifest(out_dir: Path, command: str, argv, config: dict | None,
                    inputs: dict, seeds: dict, wall_clock: dict):
    doc = {
        "command": command,
        "argv": list(argv),
        "tool_version": __version__,
        "config": config,
        "inputs": inputs,
        "rng_seeds": seeds,
        "wall_clock_s": wall_clock,
    }
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _load_config_arg(args) -> SegmentationConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
    config = config_from_dict(doc)
    if getattr(args, "dtol", None) is not None:
        config.d_tol = math.inf if args.dtol == "inf" else float(args.dtol)
    if getattr(args, "eq4_literal", False):
        config.eq4_literal = True
    return config


def cmd_simulate(args, argv) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = _load_config_arg(args)
    t0 = time.perf_counter()
    table = build_model_table(config.model, config.table_f_samples,
                              config.table_resolution)
    export_table_csv(table, out / "model_table.csv")

    f_max = table.f_max
    forces = [float(f) for f in np.linspace(0.0, 0.95 * f_max, args.n_curves)]
    curves = []
    for f0 in forces:
        state = simulate_forward(config.model, f0)
        curves.append({"f0": f0,
                       "support_points": [[float(a), float(d)]
                                          for a, d in state.positions]})
    (out / "model_curves.json").write_text(
        json.dumps({"f_max": f_max, "curves": curves}, indent=2) + "\n")
    _write_manifest(out, "simulate", argv, config_to_dict(config), {}, {},
                    {"total": time.perf_counter() - t0})
    return EXIT_OK


def cmd_phantom(args, argv) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        spec = load_phantom_spec(args.spec)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        print(f"phantom spec error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    model = SpringModelParams(k_a=args.k_a, n_seg=args.n_seg,
                              total_length=args.total_length)
    t0 = time.perf_counter()
    vol, gold, seeds = generate_phantom(spec, model)
    save_volume(vol, out / "volume.nrrd")
    save_seeds(seeds, out / "seeds.json")
    for i, g in enumerate(gold):
        save_trajectory(g, out / f"gold_{i:02d}.json")
    _write_manifest(out, "phantom", argv, None,
                    {"spec": str(args.spec)}, {"rng_seed": spec.rng_seed},
                    {"total": time.perf_counter() - t0})
    return EXIT_OK


def _segment_task(task):
    vol, tip, plane, config = task
    try:
        return ("ok", segment_catheter(vol, tip, plane, config))
    except Exception as exc:
        return ("err", f"{type(exc).__name__}: {exc}")


def cmd_segment(args, argv) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        vol = load_volume(args.volume)
        seeds = load_seeds(args.seeds)
        seeds.validate(vol)
        config = _load_config_arg(args)
    except (VolumeFormatError, TruncatedVolumeError, FileNotFoundError,
            KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_FORMAT

    config.ensure_table()
    tasks = [(vol, tip, seeds.plane, config) for tip in seeds.tips]
    wall = {}
    failures = []
    results: list = [None] * len(tasks)
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        t0 = time.perf_counter()
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_segment_task, tasks, chunksize=1))
        elapsed = time.perf_counter() - t0
        for i in range(len(tasks)):
            wall[f"catheter_{i:02d}"] = elapsed / len(tasks)
    else:
        outcomes = []
        for i, task in enumerate(tasks):
            t0 = time.perf_counter()
            outcomes.append(_segment_task(task))
            wall[f"catheter_{i:02d}"] = time.perf_counter() - t0
    for i, (status, payload) in enumerate(outcomes):
        if status == "ok":
            results[i] = payload
        else:
            failures.append((i, payload))
            print(f"catheter {i:02d} failed: {payload}", file=sys.stderr)

    for i, traj in enumerate(results):
        if traj is not None:
            save_trajectory(traj, out / f"trajectory_{i:02d}.json")
    _write_manifest(out, "segment", argv, config_to_dict(config),
                    {"volume": str(args.volume), "seeds": str(args.seeds)},
                    {}, wall)
    return EXIT_PARTIAL if failures else EXIT_OK


def _collect_numbered(path: Path, prefix: str) -> dict:
    out = {}
    for f in sorted(path.glob(f"{prefix}_*.json")):
        stem = f.stem.rsplit("_", 1)[-1]
        out[stem] = f
    return out


def cmd_evaluate(args, argv) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gold_dir, pred_dir = Path(args.gold), Path(args.pred)
    gold_files = _collect_numbered(gold_dir, "gold")
    pred_files = _collect_numbered(pred_dir, "trajectory")
    if not gold_files or set(gold_files) != set(pred_files):
        print(f"pairing error: gold ids {sorted(gold_files)} vs "
              f"trajectory ids {sorted(pred_files)}", file=sys.stderr)
        return EXIT_FORMAT

    t0 = time.perf_counter()
    scores = []
    trajs, golds = [], []
    for key in sorted(gold_files):
        gold = load_trajectory(gold_files[key])
        traj = load_trajectory(pred_files[key])
        trajs.append(traj)
        golds.append(gold)
        scores.append(score_catheter(traj, gold, f"c{key}", args.experiment,
                                     args.resample_step))
    report = ExperimentReport(scores=scores)
    write_scores_csv(report, out / "scores.csv")
    write_summary_json(report, out / "summary.json")
    write_overlay_json(trajs, golds, out / "overlay.json")
    _write_manifest(out, "evaluate", argv, None,
                    {"gold": str(gold_dir), "pred": str(pred_dir)}, {},
                    {"total": time.perf_counter() - t0})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cathseg",
        description="Model-guided segmentation of dark tubular trajectories")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write the model table and curves")
    p_sim.add_argument("--config", help="config JSON path")
    p_sim.add_argument("--n-curves", type=int, default=8)
    p_sim.add_argument("--out-dir", required=True)

    p_ph = sub.add_parser("phantom", help="generate a synthetic volume")
    p_ph.add_argument("--spec", required=True, help="phantom spec JSON")
    p_ph.add_argument("--k-a", type=float, default=2050.0)
    p_ph.add_argument("--n-seg", type=int, default=20)
    p_ph.add_argument("--total-length", type=float, default=187.0)
    p_ph.add_argument("--out-dir", required=True)

    p_seg = sub.add_parser("segment", help="segment catheters from seeds")
    p_seg.add_argument("--volume", required=True)
    p_seg.add_argument("--seeds", required=True)
    p_seg.add_argument("--config", help="config JSON path")
    p_seg.add_argument("--dtol", help="0 | inf | <mm>, overrides config")
    p_seg.add_argument("--eq4-literal", action="store_true")
    p_seg.add_argument("--jobs", type=int, default=1)
    p_seg.add_argument("--out-dir", required=True)

    p_ev = sub.add_parser("evaluate", help="score trajectories against gold")
    p_ev.add_argument("--gold", required=True, help="directory with gold_XX.json")
    p_ev.add_argument("--pred", required=True,
                      help="directory with trajectory_XX.json")
    p_ev.add_argument("--experiment", default="hybrid")
    p_ev.add_argument("--resample-step", type=float, default=0.5)
    p_ev.add_argument("--out-dir", required=True)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "phantom": cmd_phantom,
                "segment": cmd_segment, "evaluate": cmd_evaluate}
    return handlers[args.command](args, argv)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
