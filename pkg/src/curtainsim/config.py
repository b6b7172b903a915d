"""Run configuration: JSON schema, validation, and defaults.

A config is a plain JSON object; every field has a default so {} is a valid
config. Unknown keys are rejected to catch typos. CLI flags override the
file. See README for the documented schema.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GridGeometry
from .grid import MotionModel, SensorNoiseModel
from .policies import StrategyId
from .worldsim import (
    Brownian,
    Circle,
    Harmonic,
    Rectangle,
    Scene,
    SceneObject,
    Sinusoid,
    Static,
    sim_default_scene,
)

__all__ = ["AsyncPacing", "RunConfig", "load_config", "config_to_dict", "POLICY_NAMES"]

# CLI aliases -> canonical policy names. Canonical fixed-strategy names match
# StrategyId; "random", "lidar", and "mab" are pipeline-level policies.
POLICY_NAMES = {
    "depth": "depth_prob",
    "depth_prob": "depth_prob",
    "occ": "occ_entropy",
    "occ_entropy": "occ_entropy",
    "vel": "vel_entropy",
    "vel_entropy": "vel_entropy",
    "cmb": "combined",
    "combined": "combined",
    "random": "random",
    "lidar": "lidar",
    "mab": "mab",
}

FIXED_POLICIES = ("depth_prob", "occ_entropy", "vel_entropy", "combined")


def canonical_policy(name: str) -> str:
    key = str(name).strip().lower()
    if key not in POLICY_NAMES:
        raise ValueError(
            f"unknown policy {name!r}; expected one of {sorted(set(POLICY_NAMES))}"
        )
    return POLICY_NAMES[key]


@dataclass(frozen=True)
class AsyncPacing:
    """Rates (sim Hz) per execution context plus a wall-clock scale.

    time_scale multiplies every sleep: 1.0 paces contexts in real time, 0.0
    lets them free-run for stress tests. The imaging tick must be an integer
    multiple of the filter's model dt.
    """

    imaging_hz: float = 30.0
    filter_hz: float = 35.0
    placement_hz: float = 15.0
    eval_hz: float = 2.0
    time_scale: float = 0.0

    def __post_init__(self) -> None:
        for name in ("imaging_hz", "filter_hz", "placement_hz", "eval_hz"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.time_scale < 0.0:
            raise ValueError("time_scale must be nonnegative")


@dataclass
class RunConfig:
    """Everything one run needs; construct via load_config or defaults."""

    geom: GridGeometry
    model: MotionModel
    noise: SensorNoiseModel
    scene: Scene
    scene_spec: dict
    particles: int = 10
    policy: str = "mab"
    steps: int = 600
    eval_every: int = 10
    eval_horizon: float = 1.0 / 30.0
    seed: int = 0
    mode: str = "sync"
    random_fill: bool = True
    lidar_every: int = 4
    snapshot_every: int = 0
    bandit_epsilon: float = 0.1
    bandit_alpha: float = 0.1
    bandit_q_init: float = 0.5
    pacing: AsyncPacing = field(default_factory=AsyncPacing)
    out_dir: Path | None = None

    def __post_init__(self) -> None:
        self.policy = canonical_policy(self.policy)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.mode not in ("sync", "async"):
            raise ValueError("mode must be 'sync' or 'async'")
        if self.particles < 1:
            raise ValueError("particles must be >= 1")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0 (0 disables evaluation)")
        if self.eval_horizon <= 0.0:
            raise ValueError("eval_horizon must be positive")
        steps = self.eval_horizon / self.model.dt
        if abs(steps - round(steps)) > 1e-6 or round(steps) < 1:
            raise ValueError("eval_horizon must be a positive multiple of the model dt")
        if self.lidar_every < 1:
            raise ValueError("lidar_every must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0 (0 disables snapshots)")
        tick = 1.0 / self.pacing.imaging_hz
        ratio = tick / self.model.dt
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValueError("1/imaging_hz must be an integer multiple of the model dt")

    @property
    def eval_horizon_steps(self) -> int:
        return int(round(self.eval_horizon / self.model.dt))


_GEOM_KEYS = {"width", "height", "cell_size", "fov_deg", "num_rays", "r_min", "r_max"}
_MOTION_KEYS = {
    "dt",
    "vel_noise_std",
    "pos_noise_std",
    "birth_prob",
    "birth_vel_sigma",
    "occupancy_floor",
    "occupancy_ceiling",
    "torus",
}
_NOISE_KEYS = {"alpha_fp", "alpha_fn"}
_BANDIT_KEYS = {"epsilon", "alpha", "q_init"}
_ASYNC_KEYS = {"imaging_hz", "filter_hz", "placement_hz", "eval_hz", "time_scale"}
_TOP_KEYS = {
    "geometry",
    "motion",
    "noise",
    "bandit",
    "scene",
    "particles",
    "policy",
    "steps",
    "eval_every",
    "eval_horizon",
    "seed",
    "mode",
    "random_fill",
    "lidar_every",
    "snapshot_every",
    "async",
    "out",
}

_SHAPES = {"rectangle", "circle"}
_TRAJECTORIES = {"harmonic", "sinusoid", "brownian", "static"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown {where} keys: {sorted(extra)}")


def _build_geometry(d: dict) -> GridGeometry:
    _reject_unknown(d, _GEOM_KEYS, "geometry")
    return GridGeometry(
        width=int(d.get("width", 160)),
        height=int(d.get("height", 160)),
        cell_size=float(d.get("cell_size", 0.05)),
        fov=math.radians(float(d.get("fov_deg", 90.0))),
        num_rays=int(d.get("num_rays", 128)),
        r_min=float(d.get("r_min", 0.3)),
        r_max=float(d.get("r_max", 12.0)),
    )


def _build_motion(d: dict, cell_size: float) -> MotionModel:
    _reject_unknown(d, _MOTION_KEYS, "motion")
    kwargs: dict = {}
    if "dt" in d:
        kwargs["dt"] = float(d["dt"])
    if "vel_noise_std" in d:
        s = float(d["vel_noise_std"])
        kwargs["vel_noise_cov"] = np.eye(2) * s * s
    if "pos_noise_std" in d:
        s = float(d["pos_noise_std"])
        kwargs["pos_noise_cov"] = np.eye(2) * s * s
    for key in ("birth_prob", "birth_vel_sigma", "occupancy_floor", "occupancy_ceiling"):
        if key in d:
            kwargs[key] = float(d[key])
    if "torus" in d:
        kwargs["torus"] = bool(d["torus"])
    return MotionModel.for_cell_size(cell_size, **kwargs)


def _build_shape(d: dict):
    kind = d.get("kind")
    if kind == "rectangle":
        return Rectangle(width=float(d["width"]), height=float(d["height"]))
    if kind == "circle":
        return Circle(radius=float(d["radius"]))
    raise ValueError(f"shape kind must be one of {sorted(_SHAPES)}, got {kind!r}")


def _build_trajectory(d: dict):
    kind = d.get("kind")
    if kind == "harmonic":
        return Harmonic(
            center=tuple(d["center"]),
            amplitude=float(d["amplitude"]),
            frequency=float(d["frequency"]),
            phase=float(d.get("phase", 0.0)),
            direction=tuple(d.get("direction", (1.0, 0.0))),
        )
    if kind == "sinusoid":
        return Sinusoid(
            start=tuple(d["start"]),
            direction=tuple(d["direction"]),
            speed=float(d["speed"]),
            lateral_amplitude=float(d.get("lateral_amplitude", 0.0)),
            lateral_frequency=float(d.get("lateral_frequency", 0.0)),
            path_length=None if d.get("path_length") is None else float(d["path_length"]),
        )
    if kind == "brownian":
        return Brownian(
            start=tuple(d["start"]),
            sigma=float(d["sigma"]),
            bounds=tuple(d["bounds"]),
        )
    if kind == "static":
        return Static(position=tuple(d["position"]))
    raise ValueError(f"trajectory kind must be one of {sorted(_TRAJECTORIES)}, got {kind!r}")


def build_scene(spec: dict, geom: GridGeometry) -> Scene:
    """Build a Scene from its JSON spec (a preset name or an object list)."""
    if "preset" in spec:
        if spec["preset"] != "sim-default":
            raise ValueError(f"unknown scene preset {spec['preset']!r}")
        return sim_default_scene(extent=geom.extent)
    objects = []
    for od in spec.get("objects", []):
        objects.append(
            SceneObject(shape=_build_shape(od["shape"]), trajectory=_build_trajectory(od["trajectory"]))
        )
    return Scene(objects=objects)


def load_config(source=None, **overrides) -> RunConfig:
    """Build a RunConfig from a JSON file path, dict, or nothing (defaults).

    Keyword overrides (policy=, steps=, seed=, mode=, out_dir=, ...) replace
    the corresponding file values; this is how CLI flags are applied.
    """
    if source is None:
        data: dict = {}
    elif isinstance(source, dict):
        data = dict(source)
    else:
        text = Path(source).read_text()
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")

    geom = _build_geometry(dict(data.get("geometry", {})))
    model = _build_motion(dict(data.get("motion", {})), geom.cell_size)
    noise_d = dict(data.get("noise", {}))
    _reject_unknown(noise_d, _NOISE_KEYS, "noise")
    noise = SensorNoiseModel(
        alpha_fp=float(noise_d.get("alpha_fp", 0.02)),
        alpha_fn=float(noise_d.get("alpha_fn", 0.1)),
    )
    bandit_d = dict(data.get("bandit", {}))
    _reject_unknown(bandit_d, _BANDIT_KEYS, "bandit")
    async_d = dict(data.get("async", {}))
    _reject_unknown(async_d, _ASYNC_KEYS, "async")
    scene_spec = dict(data.get("scene", {"preset": "sim-default"}))
    scene = build_scene(scene_spec, geom)

    kwargs = dict(
        geom=geom,
        model=model,
        noise=noise,
        scene=scene,
        scene_spec=scene_spec,
        particles=int(data.get("particles", 10)),
        policy=str(data.get("policy", "mab")),
        steps=int(data.get("steps", 600)),
        eval_every=int(data.get("eval_every", 10)),
        eval_horizon=float(data.get("eval_horizon", 1.0 / 30.0)),
        seed=int(data.get("seed", 0)),
        mode=str(data.get("mode", "sync")),
        random_fill=bool(data.get("random_fill", True)),
        lidar_every=int(data.get("lidar_every", 4)),
        snapshot_every=int(data.get("snapshot_every", 0)),
        bandit_epsilon=float(bandit_d.get("epsilon", 0.1)),
        bandit_alpha=float(bandit_d.get("alpha", 0.1)),
        bandit_q_init=float(bandit_d.get("q_init", 0.5)),
        pacing=AsyncPacing(**{k: float(v) for k, v in async_d.items()}),
        out_dir=None if data.get("out") is None else Path(data["out"]),
    )
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in kwargs:
            raise ValueError(f"unknown config override {key!r}")
        kwargs[key] = value
    if "eval_horizon" not in data and "eval_horizon" not in overrides:
        kwargs["eval_horizon"] = kwargs["model"].dt  # default: one model step
    return RunConfig(**kwargs)


def config_to_dict(cfg: RunConfig) -> dict:
    """Round-trippable JSON echo of a RunConfig (written next to run outputs)."""
    g = cfg.geom
    m = cfg.model
    return {
        "geometry": {
            "width": g.width,
            "height": g.height,
            "cell_size": g.cell_size,
            "fov_deg": math.degrees(g.fov),
            "num_rays": g.num_rays,
            "r_min": g.r_min,
            "r_max": g.r_max,
        },
        "motion": {
            "dt": m.dt,
            "vel_noise_std": float(np.sqrt(m.vel_noise_cov[0, 0])),
            "pos_noise_std": float(np.sqrt(m.pos_noise_cov[0, 0])),
            "birth_prob": m.birth_prob,
            "birth_vel_sigma": m.birth_vel_sigma,
            "occupancy_floor": m.occupancy_floor,
            "occupancy_ceiling": m.occupancy_ceiling,
            "torus": m.torus,
        },
        "noise": {"alpha_fp": cfg.noise.alpha_fp, "alpha_fn": cfg.noise.alpha_fn},
        "bandit": {
            "epsilon": cfg.bandit_epsilon,
            "alpha": cfg.bandit_alpha,
            "q_init": cfg.bandit_q_init,
        },
        "scene": cfg.scene_spec,
        "particles": cfg.particles,
        "policy": cfg.policy,
        "steps": cfg.steps,
        "eval_every": cfg.eval_every,
        "eval_horizon": cfg.eval_horizon,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "random_fill": cfg.random_fill,
        "lidar_every": cfg.lidar_every,
        "snapshot_every": cfg.snapshot_every,
        "async": {
            "imaging_hz": cfg.pacing.imaging_hz,
            "filter_hz": cfg.pacing.filter_hz,
            "placement_hz": cfg.pacing.placement_hz,
            "eval_hz": cfg.pacing.eval_hz,
            "time_scale": cfg.pacing.time_scale,
        },
    }
