"""Curtain placement strategies over a forecast belief grid.

Each strategy ranks candidate control points along every camera ray and
places the curtain at the per-ray argmax, breaking ties toward the nearest
range. Scores are either a ray quantity (detection probability under the
belief) or a cell quantity (occupancy entropy, velocity entropy, or their
occupancy-weighted combination). All entropies are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .geometry import CameraRayTable
from .grid import GAUSS_JITTER, DynamicOccupancyGrid, fit_gaussian, fit_gaussian_batch
from .sensing import Curtain

__all__ = [
    "StrategyId",
    "DepthProbProfile",
    "depth_prob_profile",
    "occ_entropy",
    "vel_entropy",
    "vel_entropy_field",
    "combined_score",
    "combined_field",
    "info_gain_cell",
    "place_curtain",
]

LOG2_2PIE = float(np.log2(2.0 * np.pi * np.e))


class StrategyId(IntEnum):
    """Placement strategies, in bandit arm order."""

    DEPTH_PROB = 0
    OCC_ENTROPY = 1
    VEL_ENTROPY = 2
    COMBINED = 3

    @classmethod
    def from_name(cls, name: str) -> StrategyId:
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(
                f"unknown strategy {name!r}; expected one of "
                f"{[s.name.lower() for s in cls]}"
            ) from None


@dataclass(frozen=True)
class DepthProbProfile:
    """Detection/vacancy probabilities along one ray under the belief.

    p_vacant[k] is the probability every cell up to and including slot k is
    empty; p_detect[k] is the probability slot k holds the first occupied
    cell, i.e. where a curtain control point would return light.
    """

    p_detect: np.ndarray
    p_vacant: np.ndarray


def depth_prob_profile(grid: DynamicOccupancyGrid, ray_cells: np.ndarray) -> DepthProbProfile:
    """First-return probability profile along one ray's cell list."""
    om = grid.occupancy[np.asarray(ray_cells, dtype=np.int64)]
    p_vacant = np.cumprod(1.0 - om)
    prev = np.concatenate(([1.0], p_vacant[:-1]))
    return DepthProbProfile(p_detect=om * prev, p_vacant=p_vacant)


def _check_unit(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-12):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.clip(p, 0.0, 1.0)


def occ_entropy(omega):
    """Bernoulli entropy in bits; 0 log 0 := 0. Scalar in, scalar out."""
    om = _check_unit(omega)
    out = np.zeros_like(om)
    for p in (om, 1.0 - om):
        nz = p > 0.0
        out = out - np.where(nz, p * np.log2(np.where(nz, p, 1.0)), 0.0)
    return float(out) if np.isscalar(omega) or out.ndim == 0 else out


def _gauss_entropy_bits(cov: np.ndarray) -> np.ndarray:
    det = cov[..., 0, 0] * cov[..., 1, 1] - cov[..., 0, 1] * cov[..., 1, 0]
    return LOG2_2PIE + 0.5 * np.log2(det)


def vel_entropy(velocities: np.ndarray, weights: np.ndarray) -> float:
    """Differential entropy (bits) of the Gaussian fit to one particle set."""
    _, cov = fit_gaussian(velocities, weights)
    return float(_gauss_entropy_bits(cov))


def vel_entropy_field(grid: DynamicOccupancyGrid, cells: np.ndarray | None = None) -> np.ndarray:
    """vel_entropy for many cells at once."""
    if cells is None:
        vel, wts = grid.velocities, grid.weights
    else:
        cells = np.asarray(cells, dtype=np.int64)
        vel, wts = grid.velocities[cells], grid.weights[cells]
    _, cov = fit_gaussian_batch(vel, wts)
    return _gauss_entropy_bits(cov)


def combined_score(omega: float, velocities: np.ndarray, weights: np.ndarray) -> float:
    """Occupancy entropy plus occupancy-weighted velocity entropy, in bits."""
    om = float(_check_unit(omega))
    return float(occ_entropy(om) + om * vel_entropy(velocities, weights))


def combined_field(grid: DynamicOccupancyGrid, cells: np.ndarray | None = None) -> np.ndarray:
    """combined_score for many cells at once."""
    om = grid.occupancy if cells is None else grid.occupancy[np.asarray(cells, np.int64)]
    return occ_entropy(om) + om * vel_entropy_field(grid, cells)


def info_gain_cell(omega, alpha_fp: float, alpha_fn: float):
    """Expected entropy reduction (bits) from one noisy binary look at a cell.

    Prior entropy of the measurement minus the conditional entropy the noise
    model leaves behind. Zero when omega is 0 or 1; for symmetric noise the
    maximum sits at omega = 0.5.
    """
    om = _check_unit(omega)
    p_pos = om * (1.0 - alpha_fn) + (1.0 - om) * alpha_fp
    gain = occ_entropy(p_pos) - om * occ_entropy(alpha_fn) - (1.0 - om) * occ_entropy(alpha_fp)
    return float(gain) if np.isscalar(omega) else gain


def _segmented_argmax(scores: np.ndarray, rays: CameraRayTable) -> np.ndarray:
    """Per-ray argmax over in-range slots of a flat per-slot score array.

    Out-of-range slots are ignored; rays with empty range windows yield -1.
    Ties resolve to the smallest slot, i.e. the nearest range.
    """
    flat = np.arange(rays.cells.shape[0], dtype=np.int64)
    in_range = (flat >= rays.in_lo[rays.ray_of]) & (flat < rays.in_hi[rays.ray_of])
    val = np.where(in_range, scores, -np.inf)
    seg_max = np.maximum.reduceat(val, rays.offsets[:-1])
    cand = np.where(val == seg_max[rays.ray_of], flat, np.iinfo(np.int64).max)
    first = np.minimum.reduceat(cand, rays.offsets[:-1])
    empty = rays.in_hi == rays.in_lo
    slots = np.where(empty, -1, first - rays.offsets[:-1])
    return slots.astype(np.int32)


def place_curtain(
    grid: DynamicOccupancyGrid,
    strategy: StrategyId | int | str,
    rays: CameraRayTable,
) -> Curtain:
    """Place one curtain on the belief grid under the given strategy.

    Deterministic: equal scores resolve to the nearest in-range slot. Rays
    whose range window is empty carry no control point.
    """
    if isinstance(strategy, str):
        strategy = StrategyId.from_name(strategy)
    strategy = StrategyId(strategy)

    if strategy is StrategyId.DEPTH_PROB:
        slots = np.full(rays.num_rays, -1, dtype=np.int32)
        om_all = grid.occupancy[rays.cells]
        for r in range(rays.num_rays):
            lo, hi = int(rays.in_lo[r]), int(rays.in_hi[r])
            if hi <= lo:
                continue
            s, e = int(rays.offsets[r]), int(rays.offsets[r + 1])
            om = om_all[s:e]
            p_vacant = np.cumprod(1.0 - om)
            p_detect = om * np.concatenate(([1.0], p_vacant[:-1]))
            slots[r] = (lo - s) + int(np.argmax(p_detect[lo - s : hi - s]))
        return Curtain(slots=slots)

    covered = rays.covered_in_range
    per_cell = np.full(grid.geom.n_cells, -np.inf)
    if covered.size:
        if strategy is StrategyId.OCC_ENTROPY:
            per_cell[covered] = occ_entropy(grid.occupancy[covered])
        elif strategy is StrategyId.VEL_ENTROPY:
            per_cell[covered] = vel_entropy_field(grid, covered)
        else:
            per_cell[covered] = combined_field(grid, covered)
    return Curtain(slots=_segmented_argmax(per_cell[rays.cells], rays))
