"""Command-line interface: run, eval, render, bench subcommands."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .config import POLICY_NAMES, RunConfig, load_config
from .geometry import build_ray_table
from .grid import DynamicOccupancyGrid, init_grid, measurement_update, motion_update
from .pipeline import run as run_pipeline
from .policies import StrategyId, place_curtain
from .render import render_grid, write_ppm
from .sensing import lidar_scan
from .worldsim import rasterize

__all__ = ["main", "bench_throughput"]

ARM_NAMES = [s.name.lower() for s in StrategyId]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curtainsim",
        description="Active light-curtain perception simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    p_run.add_argument("--config", type=Path, default=None, help="JSON config file")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--policy", choices=sorted(set(POLICY_NAMES)), default=None)
    p_run.add_argument("--steps", type=int, default=None)
    p_run.add_argument("--mode", choices=["sync", "async"], default=None)
    p_run.add_argument("--out", type=Path, required=True, help="output directory")
    p_run.add_argument("--particles", type=int, default=None)
    p_run.add_argument("--snapshot-every", type=int, default=None, dest="snapshot_every")

    p_eval = sub.add_parser("eval", help="aggregate metrics across run directories")
    p_eval.add_argument("--runs", type=Path, nargs="+", required=True)

    p_render = sub.add_parser("render", help="render logged snapshots to PPM frames")
    p_render.add_argument("--run", type=Path, required=True)
    p_render.add_argument("--fps", type=float, default=10.0)
    p_render.add_argument("--v-max", type=float, default=2.0, dest="v_max")
    p_render.add_argument("--scale", type=int, default=1)
    p_render.add_argument("--out", type=Path, default=None)

    p_bench = sub.add_parser("bench", help="measure filter and placement throughput")
    p_bench.add_argument("--config", type=Path, default=None)
    p_bench.add_argument("--cycles", type=int, default=30)
    return parser


# ---------------------------------------------------------------------------
# run


def _cmd_run(args) -> int:
    overrides = dict(
        seed=args.seed,
        policy=args.policy,
        steps=args.steps,
        mode=args.mode,
        out_dir=args.out,
        particles=args.particles,
        snapshot_every=args.snapshot_every,
    )
    cfg = load_config(args.config, **overrides)
    records, info = run_pipeline(cfg)
    print(
        f"{cfg.policy} [{cfg.mode}] seed={cfg.seed}: {len(records)} steps "
        f"in {info['elapsed_s']:.2f}s -> {args.out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval


def _load_run(run_dir: Path) -> tuple[dict, list[dict]]:
    meta_path = run_dir / "run.json"
    metrics_path = run_dir / "metrics.jsonl"
    if not meta_path.is_file() or not metrics_path.is_file():
        raise FileNotFoundError(f"{run_dir} does not look like a run directory")
    meta = json.loads(meta_path.read_text())
    records = [json.loads(line) for line in metrics_path.read_text().splitlines() if line]
    return meta, records


def _mean_ci(values: list[float]) -> tuple[float, float]:
    """Sample mean and normal-approximation 95% CI half-width."""
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, 0.0
    return mean, float(1.96 * arr.std(ddof=1) / math.sqrt(len(arr)))


EVAL_COLUMNS = ("accuracy", "precision", "recall", "f1", "iou")


def _cmd_eval(args) -> int:
    by_policy: dict[str, list[dict]] = {}
    mab_runs: list[list[dict]] = []
    for run_dir in args.runs:
        meta, records = _load_run(run_dir)
        evals = [r["eval"] for r in records if r.get("eval")]
        if not evals:
            raise ValueError(f"{run_dir} holds no evaluation records")
        per_run = {c: float(np.mean([e[c] for e in evals])) for c in EVAL_COLUMNS}
        by_policy.setdefault(meta["policy"], []).append(per_run)
        if meta["policy"] == "mab":
            mab_runs.append(records)

    header = f"{'policy':<12}{'runs':>5}" + "".join(f"{c:>22}" for c in EVAL_COLUMNS)
    print(header)
    print("-" * len(header))
    for policy in sorted(by_policy):
        runs = by_policy[policy]
        cells = []
        for c in EVAL_COLUMNS:
            mean, hw = _mean_ci([r[c] for r in runs])
            cells.append(f"{mean:.4f} +/- {hw:.4f}")
        print(f"{policy:<12}{len(runs):>5}" + "".join(f"{cell:>22}" for cell in cells))

    if mab_runs:
        freq = np.zeros(len(ARM_NAMES))
        qsum = np.zeros(len(ARM_NAMES))
        for records in mab_runs:
            last = records[-1]
            counts = np.asarray(last["counts"], dtype=np.float64)
            freq += counts / max(counts.sum(), 1.0)
            qsum += np.asarray(last["q"], dtype=np.float64)
        freq /= len(mab_runs)
        qsum /= len(mab_runs)
        print()
        print(f"{'arm':<14}{'frequency':>12}{'avg Q':>10}")
        print("-" * 36)
        for i, name in enumerate(ARM_NAMES):
            print(f"{name:<14}{freq[i]:>11.1%}{qsum[i]:>10.4f}")
    return 0


# ---------------------------------------------------------------------------
# render


def _cmd_render(args) -> int:
    run_dir: Path = args.run
    snap_dir = run_dir / "snapshots"
    paths = sorted(snap_dir.glob("step_*.grid")) if snap_dir.is_dir() else []
    if not paths:
        final = run_dir / "final.grid"
        if not final.is_file():
            raise FileNotFoundError(
                f"{run_dir} holds no snapshots (set snapshot_every) and no final.grid"
            )
        paths = [final]
    if args.fps <= 0:
        raise ValueError("fps must be positive")
    out_dir = args.out if args.out is not None else run_dir / "frames"
    out_dir.mkdir(parents=True, exist_ok=True)

    interval = 1.0 / args.fps
    next_t = -math.inf
    n_frames = 0
    for path in paths:
        grid = DynamicOccupancyGrid.load(path)
        if grid.timestamp < next_t:
            continue
        next_t = grid.timestamp + interval
        img = render_grid(grid, v_max=args.v_max, scale=args.scale)
        write_ppm(img, out_dir / f"frame_{n_frames:06d}.ppm")
        n_frames += 1
    print(f"wrote {n_frames} frame(s) to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# bench


def _time_per_call(fn, cycles: int) -> float:
    fn()  # warm-up
    start = time.perf_counter()
    for _ in range(cycles):
        fn()
    return (time.perf_counter() - start) / cycles


def bench_throughput(cfg: RunConfig, cycles: int = 30) -> dict:
    """Measure per-phase iteration rates; returns {phase: it/s} plus metadata.

    Motion updates are timed once per importable kernel backend; the other
    phases run on the active backend only.
    """
    rng = np.random.default_rng(cfg.seed)
    geom, model = cfg.geom, cfg.model
    rays = build_ray_table(geom)

    src = init_grid(geom, model, cfg.particles, rng)
    # Populate with realistic content: mixed occupancy, moving particles.
    src.occupancy[:] = rng.uniform(model.occupancy_floor, 0.95, geom.n_cells)
    src.velocities[:] = rng.standard_normal(src.velocities.shape) * 0.5
    dst = DynamicOccupancyGrid.zeros(geom, cfg.particles)
    obs = lidar_scan(rasterize(cfg.scene, 0.0, geom, rng).occ, rays, cfg.noise, rng)

    results: dict = {
        "backend": kernels.BACKEND,
        "grid": f"{geom.width}x{geom.height}",
        "particles": cfg.particles,
        "cycles": cycles,
    }

    saved = kernels.motion_scatter
    motion_rates: dict[str, float] = {}
    try:
        for name, impl in sorted(kernels.available_backends().items()):
            kernels.motion_scatter = impl
            t = _time_per_call(lambda: motion_update(src, dst, model, rng), cycles)
            motion_rates[name] = 1.0 / t
    finally:
        kernels.motion_scatter = saved
    results["motion_update_per_s"] = motion_rates

    t_meas = _time_per_call(lambda: measurement_update(src, obs, cfg.noise, model), cycles)
    results["measurement_update_per_s"] = 1.0 / t_meas

    placement: dict[str, float] = {}
    for strategy in StrategyId:
        t = _time_per_call(lambda: place_curtain(src, strategy, rays), max(3, cycles // 3))
        placement[strategy.name.lower()] = 1.0 / t
    results["placement_per_s"] = placement

    active_motion = motion_rates[kernels.BACKEND]
    results["cycle_per_s"] = 1.0 / (1.0 / active_motion + t_meas)
    return results


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    res = bench_throughput(cfg, cycles=args.cycles)
    print(f"grid={res['grid']} particles={res['particles']} backend={res['backend']}")
    for name, rate in sorted(res["motion_update_per_s"].items()):
        print(f"motion_update[{name}]: {rate:.1f} it/s")
    print(f"measurement_update: {res['measurement_update_per_s']:.1f} it/s")
    for name, rate in res["placement_per_s"].items():
        print(f"placement[{name}]: {rate:.1f} it/s")
    print(f"cycle (motion+measurement, {res['backend']}): {res['cycle_per_s']:.1f} cycles/s")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "run": _cmd_run,
        "eval": _cmd_eval,
        "render": _cmd_render,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
