"""Active perception on a dynamic occupancy grid with light curtains.

A desk-scale simulation stack: a particle-based dynamic occupancy grid Bayes
filter, a light-curtain sensor model, four curtain-placement strategies, and a
self-supervised multi-armed bandit that switches among them, plus an
evaluation harness, HSV renderer, and a parallel four-buffer pipeline.
"""

from __future__ import annotations

from .bandit import BanditState, select_action, self_supervised_reward, update_q
from .config import AsyncPacing, RunConfig, load_config
from .geometry import (
    CameraRayTable,
    GridGeometry,
    build_ray_table,
    los_mask,
    traverse_ray,
)
from .grid import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    DynamicOccupancyGrid,
    MotionModel,
    SensorNoiseModel,
    UpdateStats,
    fit_gaussian,
    forecast,
    init_grid,
    measurement_update,
    motion_update,
    resample_particles,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .metrics import EvalReport, binarize, eval_forecast
from .pipeline import GridBufferPool, StepRecord, run, run_async, run_sync
from .policies import (
    StrategyId,
    combined_score,
    depth_prob_profile,
    info_gain_cell,
    occ_entropy,
    place_curtain,
    vel_entropy,
)
from .render import render_grid, write_ppm
from .sensing import (
    Curtain,
    DetectionSet,
    ObservationGrid,
    extract_observation,
    image_curtain,
    lidar_scan,
    random_curtain,
)
from .worldsim import (
    Brownian,
    Circle,
    GroundTruth,
    Harmonic,
    Rectangle,
    Scene,
    SceneObject,
    Sinusoid,
    Static,
    rasterize,
    sim_default_scene,
    step_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    # geometry
    "GridGeometry",
    "CameraRayTable",
    "build_ray_table",
    "traverse_ray",
    "los_mask",
    # grid core
    "UNKNOWN",
    "FREE",
    "OCCUPIED",
    "DynamicOccupancyGrid",
    "MotionModel",
    "SensorNoiseModel",
    "UpdateStats",
    "init_grid",
    "motion_update",
    "measurement_update",
    "forecast",
    "resample_particles",
    "fit_gaussian",
    # sensing
    "Curtain",
    "DetectionSet",
    "ObservationGrid",
    "image_curtain",
    "extract_observation",
    "random_curtain",
    "lidar_scan",
    # policies
    "StrategyId",
    "depth_prob_profile",
    "occ_entropy",
    "vel_entropy",
    "combined_score",
    "info_gain_cell",
    "place_curtain",
    # bandit
    "BanditState",
    "select_action",
    "self_supervised_reward",
    "update_q",
    # worldsim
    "Rectangle",
    "Circle",
    "Harmonic",
    "Sinusoid",
    "Brownian",
    "Static",
    "SceneObject",
    "Scene",
    "GroundTruth",
    "step_trajectory",
    "rasterize",
    "sim_default_scene",
    # metrics
    "EvalReport",
    "binarize",
    "eval_forecast",
    # pipeline
    "StepRecord",
    "GridBufferPool",
    "run_sync",
    "run_async",
    "run",
    # config
    "RunConfig",
    "AsyncPacing",
    "load_config",
    # render
    "render_grid",
    "write_ppm",
]
