"""Dynamic occupancy grid belief and its Bayes-filter updates.

Each cell carries a Bernoulli occupancy probability and a set of exactly M
weighted velocity particles. The motion update scatters particle mass to
destination cells under a constant-velocity model with Gaussian position and
velocity noise, then resamples every cell back to M particles; the measurement
update is a per-cell Bayes correction against OCCUPIED/FREE/UNKNOWN labels.

Snapshot layout (little-endian): header = magic b"DOG1", width u32, height
u32, M u32, cell_size f64, timestamp f64; then row-major per-cell records of
(1 + 3M) f64 values: occupancy, then per particle (vx, vy, weight).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import GridGeometry

# Observation labels; the sensing module re-exports these.
UNKNOWN = 0
FREE = 1
OCCUPIED = 2

GAUSS_JITTER = 1e-6  # (m/s)^2 added to fitted covariances

_SNAPSHOT_MAGIC = b"DOG1"
_SNAPSHOT_HEADER = struct.Struct("<4sIIIdd")


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric matrix square root of a PSD covariance (works when singular)."""
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-9:
        raise ValueError("covariance must be positive semidefinite")
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


@dataclass(frozen=True)
class MotionModel:
    """Constant-velocity motion model parameters.

    vel_noise_cov (per-step velocity diffusion) and pos_noise_cov (sub-cell
    position dithering) default to (0.25 m/s)^2 I and (0.5 * 0.05 m)^2 I, the
    values for the default 0.05 m grid; use for_cell_size() for other grids.
    """

    dt: float = 1.0 / 30.0
    vel_noise_cov: np.ndarray | None = None
    pos_noise_cov: np.ndarray | None = None
    birth_prob: float = 0.001
    birth_vel_sigma: float = 1.0
    occupancy_floor: float = 0.02
    occupancy_ceiling: float = 0.99
    torus: bool = False

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0 <= self.birth_prob < 1:
            raise ValueError("birth_prob must be in [0, 1)")
        if self.birth_vel_sigma < 0:
            raise ValueError("birth_vel_sigma must be nonnegative")
        if not 0 <= self.occupancy_floor < self.occupancy_ceiling <= 1:
            raise ValueError("require 0 <= occupancy_floor < occupancy_ceiling <= 1")
        vel_cov = self.vel_noise_cov
        pos_cov = self.pos_noise_cov
        if vel_cov is None:
            vel_cov = 0.25**2 * np.eye(2)
        if pos_cov is None:
            pos_cov = (0.5 * 0.05) ** 2 * np.eye(2)
        vel_cov = np.asarray(vel_cov, dtype=np.float64).reshape(2, 2)
        pos_cov = np.asarray(pos_cov, dtype=np.float64).reshape(2, 2)
        for cov in (vel_cov, pos_cov):
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise ValueError("noise covariances must be symmetric")
        object.__setattr__(self, "vel_noise_cov", vel_cov)
        object.__setattr__(self, "pos_noise_cov", pos_cov)
        object.__setattr__(self, "_vel_noise_sqrt", _psd_sqrt(vel_cov))
        object.__setattr__(self, "_pos_noise_sqrt", _psd_sqrt(pos_cov))

    @classmethod
    def for_cell_size(cls, cell_size: float, **overrides) -> "MotionModel":
        """Defaults with position noise scaled to half a cell."""
        overrides.setdefault("pos_noise_cov", (0.5 * cell_size) ** 2 * np.eye(2))
        return cls(**overrides)


@dataclass(frozen=True)
class SensorNoiseModel:
    alpha_fp: float = 0.02
    alpha_fn: float = 0.1

    def __post_init__(self) -> None:
        if not (0 <= self.alpha_fp < 1 and 0 <= self.alpha_fn < 1):
            raise ValueError("noise rates must be in [0, 1)")
        if self.alpha_fp + self.alpha_fn >= 1:
            raise ValueError("require alpha_fp + alpha_fn < 1 (informative sensor)")


@dataclass
class UpdateStats:
    truncation_count: int = 0
    cells_updated: int = 0
    mass_before: float = 0.0
    mass_after: float = 0.0

    def merge(self, other: "UpdateStats") -> "UpdateStats":
        return UpdateStats(
            truncation_count=self.truncation_count + other.truncation_count,
            cells_updated=self.cells_updated + other.cells_updated,
            mass_before=self.mass_before,
            mass_after=other.mass_after,
        )


class DynamicOccupancyGrid:
    """Per-cell occupancy plus M weighted velocity particles."""

    __slots__ = ("geom", "occupancy", "velocities", "weights", "timestamp")

    def __init__(
        self,
        geom: GridGeometry,
        occupancy: np.ndarray,
        velocities: np.ndarray,
        weights: np.ndarray,
        timestamp: float = 0.0,
    ) -> None:
        n = geom.n_cells
        occupancy = np.ascontiguousarray(occupancy, dtype=np.float64)
        velocities = np.ascontiguousarray(velocities, dtype=np.float64)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if occupancy.shape != (n,):
            raise ValueError("occupancy must have one value per cell")
        if weights.ndim != 2 or weights.shape[0] != n or weights.shape[1] < 1:
            raise ValueError("weights must be (n_cells, M) with M >= 1")
        if velocities.shape != (*weights.shape, 2):
            raise ValueError("velocities must be (n_cells, M, 2)")
        self.geom = geom
        self.occupancy = occupancy
        self.velocities = velocities
        self.weights = weights
        self.timestamp = float(timestamp)

    @property
    def m(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, geom: GridGeometry, m: int, timestamp: float = 0.0) -> "DynamicOccupancyGrid":
        """Writable scratch buffer (contents meaningless until written)."""
        n = geom.n_cells
        return cls(
            geom,
            np.zeros(n),
            np.zeros((n, m, 2)),
            np.full((n, m), 1.0 / m),
            timestamp,
        )

    def copy(self) -> "DynamicOccupancyGrid":
        return DynamicOccupancyGrid(
            self.geom,
            self.occupancy.copy(),
            self.velocities.copy(),
            self.weights.copy(),
            self.timestamp,
        )

    def copy_into(self, dst: "DynamicOccupancyGrid") -> None:
        if dst.geom != self.geom or dst.m != self.m:
            raise ValueError("destination grid shape mismatch")
        np.copyto(dst.occupancy, self.occupancy)
        np.copyto(dst.velocities, self.velocities)
        np.copyto(dst.weights, self.weights)
        dst.timestamp = self.timestamp

    def mean_velocity(self) -> np.ndarray:
        """(n_cells, 2) particle-weighted mean velocity."""
        return np.einsum("nm,nmd->nd", self.weights, self.velocities)

    def total_mass(self) -> float:
        return float(self.occupancy.sum())

    def check_invariants(self, floor: float = 0.0, ceiling: float = 1.0, tol: float = 1e-9) -> None:
        """Raise AssertionError when the belief state is malformed."""
        assert np.all(np.isfinite(self.occupancy)), "non-finite occupancy"
        assert self.occupancy.min() >= floor - tol, "occupancy below floor"
        assert self.occupancy.max() <= ceiling + tol, "occupancy above ceiling"
        sums = self.weights.sum(axis=1)
        assert np.all(np.abs(sums - 1.0) <= tol), "per-cell weights must sum to 1"
        assert np.all(np.isfinite(self.velocities)), "non-finite particle velocity"
        assert self.velocities.shape[1] == self.m, "particle count drifted"

    def save(self, path) -> None:
        n, m = self.weights.shape
        rec = np.empty((n, 1 + 3 * m), dtype="<f8")
        rec[:, 0] = self.occupancy
        rec[:, 1::3] = self.velocities[:, :, 0]
        rec[:, 2::3] = self.velocities[:, :, 1]
        rec[:, 3::3] = self.weights
        with open(path, "wb") as f:
            f.write(
                _SNAPSHOT_HEADER.pack(
                    _SNAPSHOT_MAGIC,
                    self.geom.width,
                    self.geom.height,
                    m,
                    self.geom.cell_size,
                    self.timestamp,
                )
            )
            f.write(rec.tobytes())

    @classmethod
    def load(cls, path, geom: GridGeometry | None = None) -> "DynamicOccupancyGrid":
        with open(path, "rb") as f:
            header = f.read(_SNAPSHOT_HEADER.size)
            if len(header) != _SNAPSHOT_HEADER.size:
                raise ValueError("truncated grid snapshot header")
            magic, width, height, m, cell_size, timestamp = _SNAPSHOT_HEADER.unpack(header)
            if magic != _SNAPSHOT_MAGIC:
                raise ValueError("not a grid snapshot file")
            payload = np.frombuffer(f.read(), dtype="<f8")
        n = width * height
        if payload.size != n * (1 + 3 * m):
            raise ValueError("grid snapshot payload size mismatch")
        if geom is None:
            geom = GridGeometry(width=width, height=height, cell_size=cell_size)
        elif (geom.width, geom.height) != (width, height) or not math.isclose(
            geom.cell_size, cell_size
        ):
            raise ValueError("snapshot does not match the provided geometry")
        rec = payload.reshape(n, 1 + 3 * m)
        vel = np.stack([rec[:, 1::3], rec[:, 2::3]], axis=2)
        return cls(geom, rec[:, 0].copy(), vel.copy(), rec[:, 3::3].copy(), timestamp)


def init_grid(
    geom: GridGeometry, model: MotionModel, m: int, rng: np.random.Generator
) -> DynamicOccupancyGrid:
    """Fresh belief: occupancy at the floor, particles N(0, birth_vel_sigma^2 I)."""
    if m < 1:
        raise ValueError("M must be at least 1")
    n = geom.n_cells
    return DynamicOccupancyGrid(
        geom,
        np.full(n, model.occupancy_floor),
        rng.standard_normal((n, m, 2)) * model.birth_vel_sigma,
        np.full((n, m), 1.0 / m),
        0.0,
    )


def motion_update(
    src: DynamicOccupancyGrid,
    dst: DynamicOccupancyGrid,
    model: MotionModel,
    rng: np.random.Generator,
) -> UpdateStats:
    """One constant-velocity prediction step from src into dst.

    dst is a scratch buffer (contents discarded) sharing src's geometry and M.
    Mass leaving the grid is dropped unless model.torus wraps it.
    """
    if dst is src:
        raise ValueError("motion update needs distinct source and destination buffers")
    if src.geom != dst.geom:
        raise ValueError("source and destination grids disagree on geometry")
    if src.m != dst.m:
        raise ValueError("source and destination grids disagree on particle count")
    n, m = src.weights.shape
    geom = src.geom

    # RNG stream layout is fixed: position noise, velocity noise, resampling
    # uniforms, then birth velocities for exactly the cells that need them.
    delta = rng.standard_normal((n, m, 2)) @ model._pos_noise_sqrt.T
    eps = rng.standard_normal((n, m, 2)) @ model._vel_noise_sqrt.T
    u0 = rng.random(n)
    needs_birth = np.empty(n, dtype=np.uint8)
    truncations, cells_in = kernels.motion_scatter(
        src.occupancy,
        src.velocities,
        src.weights,
        geom.cell_centers,
        model.dt,
        1.0 / geom.cell_size,
        geom.origin[0],
        geom.origin[1],
        geom.width,
        geom.height,
        model.torus,
        delta,
        eps,
        u0,
        model.birth_prob,
        model.occupancy_floor,
        model.occupancy_ceiling,
        dst.occupancy,
        dst.velocities,
        dst.weights,
        needs_birth,
    )
    needy = np.flatnonzero(needs_birth)
    if len(needy):
        dst.velocities[needy] = rng.standard_normal((len(needy), m, 2)) * model.birth_vel_sigma
    dst.timestamp = src.timestamp + model.dt
    return UpdateStats(
        truncation_count=int(truncations),
        cells_updated=int(cells_in),
        mass_before=src.total_mass(),
        mass_after=dst.total_mass(),
    )


def resample_particles(
    velocities: np.ndarray,
    masses: np.ndarray,
    m: int,
    rng: np.random.Generator,
    birth_vel_sigma: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Systematic (low-variance) resampling to m particles with weights 1/m.

    Expected copies of particle k = m * masses[k] / sum(masses). All-zero mass
    falls back to m birth-prior particles N(0, birth_vel_sigma^2 I).
    """
    velocities = np.asarray(velocities, dtype=np.float64).reshape(-1, 2)
    masses = np.asarray(masses, dtype=np.float64).ravel()
    if len(masses) == 0 or len(masses) != len(velocities):
        raise ValueError("need one mass per particle, at least one particle")
    if masses.min() < 0:
        raise ValueError("masses must be nonnegative")
    weights = np.full(m, 1.0 / m)
    c = np.cumsum(masses)
    total = c[-1]
    if total <= 0.0:
        return rng.standard_normal((m, 2)) * birth_vel_sigma, weights
    u = (rng.random() + np.arange(m, dtype=np.float64)) * (total / m)
    sel = np.minimum(np.searchsorted(c, u, side="right"), len(masses) - 1)
    return velocities[sel].copy(), weights


def measurement_update(
    grid: DynamicOccupancyGrid,
    obs,
    noise: SensorNoiseModel,
    model: MotionModel,
) -> UpdateStats:
    """Bayes correction of occupancy against an observation grid, in place.

    Likelihood table: P(z=OCC | occupied) = 1 - alpha_fn, P(z=OCC | free) =
    alpha_fp, complements for z=FREE. UNKNOWN cells are left bit-unchanged;
    particle sets are never modified. Results clamp to the model's occupancy
    bounds. The degenerate 0/0 posterior (possible only with a zero floor)
    keeps the prior.
    """
    labels = np.asarray(obs.labels if hasattr(obs, "labels") else obs)
    if labels.shape != grid.occupancy.shape:
        raise ValueError("observation does not match grid geometry")
    mass_before = grid.total_mass()
    update = labels != UNKNOWN
    n_upd = int(np.count_nonzero(update))
    if n_upd == 0:
        return UpdateStats(0, 0, mass_before, mass_before)
    z_occ = labels == OCCUPIED
    om = grid.occupancy
    p_if_occ = np.where(z_occ, 1.0 - noise.alpha_fn, noise.alpha_fn)
    p_if_free = np.where(z_occ, noise.alpha_fp, 1.0 - noise.alpha_fp)
    num = om * p_if_occ
    den = num + (1.0 - om) * p_if_free
    safe = den > 0.0
    post = np.where(safe, num / np.where(safe, den, 1.0), om)
    np.clip(post, model.occupancy_floor, model.occupancy_ceiling, out=post)
    om[update] = post[update]
    return UpdateStats(0, n_upd, mass_before, grid.total_mass())


def forecast(
    src: DynamicOccupancyGrid,
    dst: DynamicOccupancyGrid,
    model: MotionModel,
    horizon: float,
    rng: np.random.Generator,
) -> UpdateStats:
    """Propagate src forward by horizon seconds into dst; src is unmodified.

    horizon must be a positive integer multiple of model.dt.
    """
    steps_f = horizon / model.dt
    steps = int(round(steps_f))
    if steps < 1 or abs(steps_f - steps) > 1e-9:
        raise ValueError("horizon must be a positive integer multiple of model.dt")
    if steps == 1:
        return motion_update(src, dst, model, rng)
    scratch = DynamicOccupancyGrid.zeros(src.geom, src.m)
    stats: UpdateStats | None = None
    cur = src
    for i in range(steps):
        target = dst if (steps - 1 - i) % 2 == 0 else scratch
        step_stats = motion_update(cur, target, model, rng)
        stats = step_stats if stats is None else stats.merge(step_stats)
        cur = target
    return stats


def fit_gaussian(velocities: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Gaussian moments of a particle set, jittered covariance.

    Returns (mu, cov) with cov = sum_k w_k (v_k - mu)(v_k - mu)^T + 1e-6 I.
    Weights must sum to 1.
    """
    velocities = np.asarray(velocities, dtype=np.float64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if len(weights) == 0 or len(weights) != len(velocities):
        raise ValueError("need one weight per particle, at least one particle")
    if abs(weights.sum() - 1.0) > 1e-6:
        raise ValueError("weights must sum to 1")
    mu = weights @ velocities
    d = velocities - mu
    cov = (weights[:, None] * d).T @ d
    return mu, cov + GAUSS_JITTER * np.eye(2)


def fit_gaussian_batch(velocities: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """fit_gaussian over every cell at once: (N,M,2),(N,M) -> (N,2),(N,2,2)."""
    mu = np.einsum("nm,nmd->nd", weights, velocities)
    d = velocities - mu[:, None, :]
    cov = np.einsum("nm,nmd,nme->nde", weights, d, d)
    cov[:, 0, 0] += GAUSS_JITTER
    cov[:, 1, 1] += GAUSS_JITTER
    return mu, cov
