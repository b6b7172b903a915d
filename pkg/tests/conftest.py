"""Shared fixtures: small geometries, models, and seeded generators."""

from __future__ import annotations

import numpy as np
import pytest

from curtainsim.geometry import GridGeometry, build_ray_table
from curtainsim.grid import MotionModel, SensorNoiseModel, init_grid


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def geom_small():
    """8x8 cells at 0.25 m (2x2 m), sensor at the bottom center."""
    return GridGeometry(width=8, height=8, cell_size=0.25, num_rays=8, r_min=0.3, r_max=3.0)


@pytest.fixture
def geom_mid():
    """32x32 cells at 0.125 m (4x4 m), 32 rays."""
    return GridGeometry(width=32, height=32, cell_size=0.125, num_rays=32, r_min=0.3, r_max=6.0)


@pytest.fixture
def rays_mid(geom_mid):
    return build_ray_table(geom_mid)


@pytest.fixture
def model_default():
    return MotionModel.for_cell_size(0.125)


@pytest.fixture
def model_clean():
    """Deterministic transport: no noise, no birth, unclamped occupancy."""
    return MotionModel(
        dt=0.1,
        vel_noise_cov=np.zeros((2, 2)),
        pos_noise_cov=np.zeros((2, 2)),
        birth_prob=0.0,
        occupancy_floor=0.0,
        occupancy_ceiling=1.0,
    )


@pytest.fixture
def noise_free():
    return SensorNoiseModel(alpha_fp=0.0, alpha_fn=0.0)


@pytest.fixture
def noise_default():
    return SensorNoiseModel(alpha_fp=0.02, alpha_fn=0.1)


@pytest.fixture
def grid_factory():
    """Build a belief grid with given occupancy spots and particle velocities."""

    def make(geom, m=4, spots=None, velocity=None, model=None, seed=0):
        model = model or MotionModel.for_cell_size(geom.cell_size)
        g = init_grid(geom, model, m, np.random.default_rng(seed))
        if spots:
            for cell, om in spots.items():
                g.occupancy[cell] = om
        if velocity is not None:
            g.velocities[:] = np.asarray(velocity, dtype=np.float64)
        return g

    return make
