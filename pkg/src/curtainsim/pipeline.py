"""Run orchestration: deterministic synchronous stepping and a parallel
pipeline built on a four-buffer grid pool.

Sync mode, per step t (belief at time t*dt):
  1. forecast the belief one step ahead into the forecasting buffer;
  2. select a strategy (bandit or fixed) and place a curtain on the forecast;
  3. advance the scene one step and image the curtain there;
  4. motion-update the belief to t+1;
  5. score the forecast-vs-observation reward and credit the selected arm;
  6. measurement-update with the observation (plus the optional random
     filler curtain);
  7. on eval ticks, forecast by the eval horizon and grade it against
     ground truth once the scene reaches the target time.

The per-step record logs the action-value table as it stood at selection
time, so the arm recorded at step t is the arm whose logged Q changes at
step t+1.

Async mode runs three contexts (imaging, filtering, placement) plus a
read-only evaluation consumer that works on snapshot copies and never
touches the buffer pool. Buffer ownership moves by explicit handoff; the
pool holds four buffers so the filter can always acquire a scratch buffer
without waiting on placement.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bandit import BanditState, select_action, self_supervised_reward, update_q
from .config import RunConfig, build_scene, config_to_dict
from .geometry import build_ray_table, los_mask
from .grid import (
    DynamicOccupancyGrid,
    forecast,
    init_grid,
    measurement_update,
    motion_update,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import eval_forecast
from .policies import StrategyId, place_curtain
from .sensing import extract_observation, image_curtain, lidar_scan, random_curtain
from .worldsim import rasterize

__all__ = [
    "StepRecord",
    "GridBufferPool",
    "run_sync",
    "run_async",
    "run",
    "write_jsonl",
]

_STREAMS = ("scene", "filter", "sensing", "placement", "eval")


def _spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent per-context RNG streams derived from the run seed."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {
        name: np.random.Generator(np.random.PCG64(child))
        for name, child in zip(_STREAMS, children)
    }


@dataclass
class StepRecord:
    """One JSONL metrics record."""

    step: int
    t: float
    mode: str
    arm: int | None
    reward: float | None
    q: list[float]
    counts: list[int]
    eval: dict | None
    truncation_rate: float
    mass: float

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "t": self.t,
            "mode": self.mode,
            "arm": self.arm,
            "reward": self.reward,
            "q": self.q,
            "counts": self.counts,
            "eval": self.eval,
            "truncation_rate": self.truncation_rate,
            "mass": self.mass,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), separators=(",", ":"))


def write_jsonl(records: list[StepRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def _fixed_strategy(policy: str) -> StrategyId | None:
    try:
        return StrategyId.from_name(policy)
    except ValueError:
        return None


def _fresh_scene(cfg: RunConfig):
    """A scene with pristine trajectory state for one run.

    Brownian trajectories advance in place, so every run rebuilds the scene
    from its JSON spec; a directly injected Scene (no spec) is used as-is
    and is then good for one run only.
    """
    if cfg.scene_spec:
        return build_scene(cfg.scene_spec, cfg.geom)
    return cfg.scene


# ---------------------------------------------------------------------------
# Synchronous mode


def run_sync(cfg: RunConfig, snapshot_sink=None):
    """Run the loop single-threaded; deterministic given cfg.seed.

    Returns (records, final_belief). snapshot_sink(step, grid), when given,
    receives the belief at every snapshot tick (cfg.snapshot_every).
    """
    rngs = _spawn_streams(cfg.seed)
    geom, model, noise = cfg.geom, cfg.model, cfg.noise
    scene = _fresh_scene(cfg)
    rays = build_ray_table(geom)
    dt = model.dt

    bel = init_grid(geom, model, cfg.particles, rngs["filter"])
    scratch = DynamicOccupancyGrid.zeros(geom, cfg.particles)
    fc = DynamicOccupancyGrid.zeros(geom, cfg.particles)
    evalb = DynamicOccupancyGrid.zeros(geom, cfg.particles)

    bandit = BanditState(
        epsilon=cfg.bandit_epsilon, alpha=cfg.bandit_alpha, q_init=cfg.bandit_q_init
    )
    fixed = _fixed_strategy(cfg.policy)
    h_steps = cfg.eval_horizon_steps
    pending: dict[int, np.ndarray] = {}  # target scene step -> binarized forecast
    records: list[StepRecord] = []

    for step in range(cfg.steps):
        # 1. One-step forecast for placement.
        forecast(bel, fc, model, dt, rngs["placement"])

        # 2. Strategy selection and curtain placement on the forecast.
        arm: int | None = None
        curtain = None
        if cfg.policy == "mab":
            strategy = select_action(bandit, rngs["placement"])
            arm = int(strategy)
            curtain = place_curtain(fc, strategy, rays)
        elif fixed is not None:
            arm = int(fixed)
            bandit.counts[arm] += 1
            curtain = place_curtain(fc, fixed, rays)
        elif cfg.policy == "random":
            curtain = random_curtain(rays, rngs["placement"])
        q_sel = [float(v) for v in bandit.q]
        counts_sel = [int(c) for c in bandit.counts]

        # 3. Advance the scene and take the observation there.
        t1 = (step + 1) * dt
        gt1 = rasterize(scene, t1, geom, rngs["scene"])
        obs = None
        if curtain is not None:
            det = image_curtain(gt1.occ, curtain, noise, rays, rngs["sensing"])
            obs = extract_observation(curtain, det, rays, timestamp=t1)
        elif cfg.policy == "lidar" and step % cfg.lidar_every == 0:
            obs = lidar_scan(gt1.occ, rays, noise, rngs["sensing"], timestamp=t1)
        filler = None
        if cfg.random_fill and curtain is not None:
            rc = random_curtain(rays, rngs["placement"])
            det2 = image_curtain(gt1.occ, rc, noise, rays, rngs["sensing"])
            filler = extract_observation(rc, det2, rays, timestamp=t1)

        # 4. Prediction step.
        stats = motion_update(bel, scratch, model, rngs["filter"])
        bel, scratch = scratch, bel

        # 5. Self-supervised reward against the pre-correction belief.
        reward: float | None = None
        if obs is not None:
            reward = self_supervised_reward(bel, obs)
            if arm is not None:
                update_q(bandit, arm, reward)

        # 6. Correction step; the policy observation first, then the filler.
        if obs is not None:
            measurement_update(bel, obs, noise, model)
        if filler is not None:
            measurement_update(bel, filler, noise, model)

        # 7. Evaluation: emit any forecast whose target time just arrived,
        # then enqueue a fresh one on eval ticks.
        eval_out: dict | None = None
        target = pending.pop(step + 1, None)
        if target is not None:
            report = eval_forecast(
                target, gt1.occ, los_mask(gt1.occ, rays), horizon=cfg.eval_horizon
            )
            eval_out = report.as_dict()
        if cfg.eval_every > 0 and step % cfg.eval_every == 0:
            forecast(bel, evalb, model, cfg.eval_horizon, rngs["eval"])
            pending[step + 1 + h_steps] = evalb.occupancy >= 0.5

        records.append(
            StepRecord(
                step=step,
                t=t1,
                mode="sync",
                arm=arm,
                reward=reward,
                q=q_sel,
                counts=counts_sel,
                eval=eval_out,
                truncation_rate=stats.truncation_count / max(1, stats.cells_updated),
                mass=bel.total_mass(),
            )
        )
        if (
            snapshot_sink is not None
            and cfg.snapshot_every > 0
            and (step + 1) % cfg.snapshot_every == 0
        ):
            snapshot_sink(step + 1, bel)
    return records, bel


# ---------------------------------------------------------------------------
# Buffer pool and asynchronous mode

_FREE = "free"
_LATEST = "latest"
_RETIRED = "retired"


class GridBufferPool:
    """Four grid buffers with explicit exclusive-ownership handoff.

    Buffer states: free, owned by a named context, latest (the freshest
    published belief, read-only by convention), or retired (a former latest
    still pinned by a reader). State moves only through the methods below,
    under one lock, and every illegal transition increments `violations`
    instead of corrupting the role map.
    """

    SIZE = 4

    def __init__(self, geom, m: int) -> None:
        self._buffers = [DynamicOccupancyGrid.zeros(geom, m) for _ in range(self.SIZE)]
        self._state = [_FREE] * self.SIZE
        self._pins = [0] * self.SIZE
        self._latest: int | None = None
        self._lock = threading.Lock()
        self.violations = 0
        self.acquire_failures = 0  # per-caller counters kept by the contexts

    def _index(self, buf) -> int:
        for i, b in enumerate(self._buffers):
            if b is buf:
                return i
        raise ValueError("buffer does not belong to this pool")

    def acquire(self, owner: str):
        """Take exclusive ownership of some free buffer; None if all busy."""
        with self._lock:
            for i, st in enumerate(self._state):
                if st == _FREE:
                    if self._pins[i] != 0:
                        self.violations += 1
                        continue
                    self._state[i] = owner
                    return self._buffers[i]
            self.acquire_failures += 1
            return None

    def release(self, buf, owner: str) -> None:
        """Give up ownership without publishing."""
        with self._lock:
            i = self._index(buf)
            if self._state[i] != owner:
                self.violations += 1
                return
            self._state[i] = _FREE

    def publish(self, buf, owner: str) -> None:
        """Promote an owned buffer to be the shared latest belief."""
        with self._lock:
            i = self._index(buf)
            if self._state[i] != owner:
                self.violations += 1
                return
            old = self._latest
            if old is not None:
                self._state[old] = _RETIRED if self._pins[old] > 0 else _FREE
            self._state[i] = _LATEST
            self._latest = i

    def latest(self):
        """The freshest published belief (read-only by convention)."""
        with self._lock:
            return None if self._latest is None else self._buffers[self._latest]

    def pin_latest(self):
        """Borrow the latest belief for reading; pair with unpin()."""
        with self._lock:
            if self._latest is None:
                return None
            self._pins[self._latest] += 1
            return self._buffers[self._latest]

    def unpin(self, buf) -> None:
        with self._lock:
            i = self._index(buf)
            if self._pins[i] <= 0:
                self.violations += 1
                return
            self._pins[i] -= 1
            if self._pins[i] == 0 and self._state[i] == _RETIRED:
                self._state[i] = _FREE

    def check_owned(self, buf, owner: str) -> None:
        """Monitor hook: count a violation if `owner` does not own `buf`."""
        with self._lock:
            i = self._index(buf)
            if self._state[i] != owner:
                self.violations += 1

    def role_map(self) -> dict[int, str]:
        with self._lock:
            return {i: st for i, st in enumerate(self._state)}


class _Mailbox:
    """Single-slot, latest-wins handoff."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._item = None

    def put(self, item) -> None:
        with self._lock:
            self._item = item

    def take(self):
        with self._lock:
            item, self._item = self._item, None
            return item

    def empty(self) -> bool:
        with self._lock:
            return self._item is None


class _GtRing:
    """Recent ground-truth snapshots by timestamp, for the eval consumer."""

    def __init__(self, keep: int = 128) -> None:
        self._lock = threading.Lock()
        self._items: list[tuple[float, np.ndarray]] = []
        self._keep = keep

    def put(self, t: float, occ: np.ndarray) -> None:
        with self._lock:
            self._items.append((t, occ))
            if len(self._items) > self._keep:
                del self._items[0]

    def find(self, t: float, tol: float):
        with self._lock:
            for ts, occ in reversed(self._items):
                if abs(ts - t) <= tol:
                    return occ
        return None


def run_async(cfg: RunConfig, placement_stall_s: float = 0.0):
    """Run the parallel pipeline; returns (records, instrumentation dict).

    Three contexts: imaging owns the scene clock and the sensor, filtering
    owns the belief chain over pool buffers, placement owns the bandit and
    the forecasting buffer. A fourth read-only consumer grades forecasts on
    snapshot copies. placement_stall_s injects an artificial per-cycle delay
    into the placement context for liveness tests.
    """
    rngs = _spawn_streams(cfg.seed)
    geom, model, noise = cfg.geom, cfg.model, cfg.noise
    scene = _fresh_scene(cfg)
    rays = build_ray_table(geom)
    dt = model.dt
    tick = 1.0 / cfg.pacing.imaging_hz
    scale = cfg.pacing.time_scale
    fixed = _fixed_strategy(cfg.policy)
    places_curtains = cfg.policy == "mab" or fixed is not None

    pool = GridBufferPool(geom, cfg.particles)
    first = pool.acquire("filter")
    init_grid(geom, model, cfg.particles, rngs["filter"]).copy_into(first)
    pool.publish(first, "filter")

    curtain_mail = _Mailbox()  # (curtain, arm)
    obs_mail = _Mailbox()  # (obs, arm)
    gt_ring = _GtRing()
    bandit = BanditState(
        epsilon=cfg.bandit_epsilon, alpha=cfg.bandit_alpha, q_init=cfg.bandit_q_init
    )
    bandit_lock = threading.Lock()
    reward_inbox: list[tuple[int, float]] = []
    eval_requests = threading.Event()
    eval_snap_mail = _Mailbox()  # belief copy for the eval consumer
    eval_results: list[dict] = []
    eval_lock = threading.Lock()

    stop = threading.Event()
    records: list[StepRecord] = []
    counters = {
        "imaging_ticks": 0,
        "filter_cycles": 0,
        "filter_blocked": 0,
        "placement_curtains": 0,
        "random_fills": 0,
        "eval_reports": 0,
    }
    errors: list[BaseException] = []

    def imaging() -> None:
        k = 0
        try:
            while not stop.is_set():
                if scale == 0.0:
                    # Free-run pacing: produce the next observation only once
                    # the previous one is consumed, so stress runs tick in
                    # lockstep instead of racing the filter off the clock.
                    while not (obs_mail.empty() or stop.is_set()):
                        time.sleep(1e-6)
                    if stop.is_set():
                        break
                k += 1
                t_k = k * tick
                gt = rasterize(scene, t_k, geom, rngs["scene"])
                gt_ring.put(t_k, gt.occ.copy())
                obs = None
                arm = None
                msg = curtain_mail.take() if places_curtains else None
                if cfg.policy == "lidar":
                    if (k - 1) % cfg.lidar_every == 0:
                        obs = lidar_scan(gt.occ, rays, noise, rngs["sensing"], timestamp=t_k)
                elif msg is not None:
                    curtain, arm = msg
                    det = image_curtain(gt.occ, curtain, noise, rays, rngs["sensing"])
                    obs = extract_observation(curtain, det, rays, timestamp=t_k)
                else:
                    # No computed curtain pending: place a random one.
                    rc = random_curtain(rays, rngs["sensing"])
                    det = image_curtain(gt.occ, rc, noise, rays, rngs["sensing"])
                    obs = extract_observation(rc, det, rays, timestamp=t_k)
                    counters["random_fills"] += 1
                counters["imaging_ticks"] += 1
                if obs is not None:
                    obs_mail.put((obs, arm))
                if scale > 0.0:
                    time.sleep(tick * scale)
                else:
                    time.sleep(0.0)
        except BaseException as exc:  # surface thread failures to the caller
            errors.append(exc)
            stop.set()

    def filtering() -> None:
        try:
            while not stop.is_set() and len(records) < cfg.steps:
                msg = obs_mail.take()
                if msg is None:
                    time.sleep(1e-5)
                    continue
                obs, arm = msg
                cur = pool.latest()
                gap = obs.timestamp - cur.timestamp
                n_steps = int(round(gap / dt))
                if n_steps < 1:
                    continue  # stale observation; belief already passed it
                stats = None
                reward = None
                for j in range(n_steps):
                    scratch = pool.acquire("filter")
                    if scratch is None:
                        counters["filter_blocked"] += 1
                        time.sleep(1e-5)
                        scratch = pool.acquire("filter")
                        if scratch is None:
                            break
                    pool.check_owned(scratch, "filter")
                    step_stats = motion_update(cur, scratch, model, rngs["filter"])
                    stats = step_stats if stats is None else stats.merge(step_stats)
                    if j == n_steps - 1:
                        reward = self_supervised_reward(scratch, obs)
                        measurement_update(scratch, obs, noise, model)
                    pool.publish(scratch, "filter")
                    cur = scratch
                if stats is None or reward is None:
                    continue
                if arm is not None:
                    with bandit_lock:
                        reward_inbox.append((arm, reward))
                if eval_requests.is_set():
                    eval_requests.clear()
                    eval_snap_mail.put(cur.copy())
                with bandit_lock:
                    q_now = [float(v) for v in bandit.q]
                    c_now = [int(c) for c in bandit.counts]
                with eval_lock:
                    eval_out = eval_results.pop(0) if eval_results else None
                counters["filter_cycles"] += 1
                records.append(
                    StepRecord(
                        step=len(records),
                        t=obs.timestamp,
                        mode="async",
                        arm=arm,
                        reward=reward,
                        q=q_now,
                        counts=c_now,
                        eval=eval_out,
                        truncation_rate=stats.truncation_count / max(1, stats.cells_updated),
                        mass=cur.total_mass(),
                    )
                )
                if scale > 0.0:
                    time.sleep(scale / cfg.pacing.filter_hz)
        except BaseException as exc:
            errors.append(exc)
        finally:
            stop.set()

    def placement() -> None:
        if not places_curtains:
            return  # random and lidar runs place nothing
        try:
            while not stop.is_set():
                if placement_stall_s > 0.0:
                    time.sleep(placement_stall_s)
                with bandit_lock:
                    inbox, reward_inbox[:] = reward_inbox[:], []
                    for a, r in inbox:
                        update_q(bandit, a, r)
                src = pool.pin_latest()
                if src is None:
                    time.sleep(1e-5)
                    continue
                buf = pool.acquire("placement")
                if buf is None:
                    pool.unpin(src)
                    time.sleep(1e-5)
                    continue
                pool.check_owned(buf, "placement")
                try:
                    forecast(src, buf, model, tick, rngs["placement"])
                finally:
                    pool.unpin(src)
                if cfg.policy == "mab":
                    with bandit_lock:
                        strategy = select_action(bandit, rngs["placement"])
                else:
                    strategy = fixed
                    with bandit_lock:
                        bandit.counts[int(fixed)] += 1
                curtain = place_curtain(buf, strategy, rays)
                pool.release(buf, "placement")
                curtain_mail.put((curtain, int(strategy)))
                counters["placement_curtains"] += 1
                if scale > 0.0:
                    time.sleep(scale / cfg.pacing.placement_hz)
                else:
                    time.sleep(0.0)
        except BaseException as exc:
            errors.append(exc)
            stop.set()

    def evaluator() -> None:
        if cfg.eval_every <= 0:
            return
        # Sim-time cadence measured in filter records, valid in both pacing
        # regimes (records track imaging ticks one-to-one when none drop).
        gap = max(1, int(round(cfg.pacing.imaging_hz / cfg.pacing.eval_hz)))
        last_at = -gap
        try:
            while not stop.is_set():
                if len(records) - last_at < gap:
                    time.sleep(1e-4)
                    continue
                last_at = len(records)
                eval_requests.set()
                snap = None
                while snap is None and not stop.is_set():
                    snap = eval_snap_mail.take()
                    if snap is None:
                        time.sleep(1e-4)
                if snap is None:
                    break
                pred = DynamicOccupancyGrid.zeros(geom, cfg.particles)
                forecast(snap, pred, model, cfg.eval_horizon, rngs["eval"])
                target_t = snap.timestamp + cfg.eval_horizon
                occ = None
                while occ is None and not stop.is_set():
                    occ = gt_ring.find(target_t, tol=0.25 * tick)
                    if occ is None:
                        time.sleep(1e-4)
                if occ is None:
                    break
                report = eval_forecast(
                    pred.occupancy >= 0.5, occ, los_mask(occ, rays), horizon=cfg.eval_horizon
                )
                with eval_lock:
                    eval_results.append(report.as_dict())
                counters["eval_reports"] += 1
        except BaseException as exc:
            errors.append(exc)
            stop.set()

    threads = [
        threading.Thread(target=imaging, name="imaging", daemon=True),
        threading.Thread(target=filtering, name="filtering", daemon=True),
        threading.Thread(target=placement, name="placement", daemon=True),
        threading.Thread(target=evaluator, name="evaluator", daemon=True),
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]

    final = pool.latest()
    info = dict(counters)
    info["pool_violations"] = pool.violations
    info["pool_acquire_failures"] = pool.acquire_failures
    info["role_map"] = pool.role_map()
    return records, (final.copy() if final is not None else None), info


# ---------------------------------------------------------------------------
# Entry point with file outputs


def run(cfg: RunConfig):
    """Execute one configured run; write outputs when cfg.out_dir is set.

    Returns (records, info). Files written: metrics.jsonl, final.grid,
    run.json, and snapshots/step_XXXXXX.grid at the snapshot cadence.
    """
    out = cfg.out_dir
    snap_dir = None
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)

    started = time.perf_counter()
    if cfg.mode == "sync":

        def sink(step: int, grid: DynamicOccupancyGrid) -> None:
            if snap_dir is not None:
                grid.save(snap_dir / f"step_{step:06d}.grid")

        records, final_grid = run_sync(cfg, snapshot_sink=sink)
        info = {"mode": "sync"}
    else:
        records, final_grid, info = run_async(cfg)
        info = {"mode": "async", **info}
    elapsed = time.perf_counter() - started

    info.update(
        {
            "policy": cfg.policy,
            "seed": cfg.seed,
            "steps": len(records),
            "backend": KERNEL_BACKEND,
            "elapsed_s": elapsed,
        }
    )
    if out is not None:
        write_jsonl(records, out / "metrics.jsonl")
        if final_grid is not None:
            final_grid.save(out / "final.grid")
        payload = {k: v for k, v in info.items() if k != "role_map"}
        payload["config"] = config_to_dict(cfg)
        with open(out / "run.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return records, info
