"""Planar grid geometry: cell indexing, ray traversal, camera ray table, line of sight.

The world is a rectangular grid of square cells. Flat cell indices are
row-major in y: index = iy * width + ix, with cell (ix, iy) covering
[origin + (ix, iy) * cell_size, origin + (ix + 1, iy + 1) * cell_size).
The sensor looks along +y ("forward"); ray k of n spans the field of view
with the pixel-center convention, so a single ray points straight ahead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# A cell mask is a plain boolean ndarray of shape (n_cells,).
CellMask = np.ndarray

_BOUNDS_TOL = 1e-9  # tolerance (in cells) for points sitting exactly on the border


@dataclass(frozen=True)
class GridGeometry:
    """Static description of the grid and the sensor mounted in it.

    Parameters
    ----------
    width, height : int
        Grid size in cells (positive).
    cell_size : float
        Cell edge length in meters (positive).
    origin : tuple of float
        World coordinates of the lower-left grid corner.
    sensor_pos : tuple of float
        Sensor position in world coordinates; must lie inside the grid.
    fov : float
        Angular field of view in radians, 0 < fov < pi.
    num_rays : int
        Number of camera rays (positive).
    r_min, r_max : float
        Range window for curtain placement, 0 <= r_min < r_max.
    """

    width: int
    height: int
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)
    sensor_pos: tuple[float, float] | None = None
    fov: float = math.pi / 2
    num_rays: int = 128
    r_min: float = 0.3
    r_max: float = 12.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid dimensions must be positive")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if not 0 < self.fov < math.pi:
            raise ValueError("fov must be in (0, pi)")
        if self.num_rays <= 0:
            raise ValueError("num_rays must be positive")
        if not 0 <= self.r_min < self.r_max:
            raise ValueError("require 0 <= r_min < r_max")
        if self.sensor_pos is None:
            # Bottom-center, half a cell above the lower edge.
            pos = (
                self.origin[0] + 0.5 * self.width * self.cell_size,
                self.origin[1] + 0.5 * self.cell_size,
            )
            object.__setattr__(self, "sensor_pos", pos)
        if not self.contains_point(np.asarray(self.sensor_pos, dtype=np.float64)):
            raise ValueError("sensor_pos must lie inside the grid")

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    @property
    def extent(self) -> tuple[float, float]:
        """Grid size in meters (x, y)."""
        return self.width * self.cell_size, self.height * self.cell_size

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """(n_cells, 2) world coordinates of all cell centers, row-major."""
        ix = np.arange(self.width, dtype=np.float64)
        iy = np.arange(self.height, dtype=np.float64)
        cx = self.origin[0] + (ix + 0.5) * self.cell_size
        cy = self.origin[1] + (iy + 0.5) * self.cell_size
        gx, gy = np.meshgrid(cx, cy)  # rows indexed by y
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def contains_point(self, point: np.ndarray) -> bool:
        ex, ey = self.extent
        tol = _BOUNDS_TOL * self.cell_size
        return bool(
            self.origin[0] - tol <= point[0] <= self.origin[0] + ex + tol
            and self.origin[1] - tol <= point[1] <= self.origin[1] + ey + tol
        )

    def point_to_cell(self, point: np.ndarray) -> int:
        """Flat index of the cell containing a point (floor convention).

        Points exactly on the upper/right border are clamped to the last cell.
        """
        ix = int(math.floor((point[0] - self.origin[0]) / self.cell_size))
        iy = int(math.floor((point[1] - self.origin[1]) / self.cell_size))
        ix = min(max(ix, 0), self.width - 1)
        iy = min(max(iy, 0), self.height - 1)
        return iy * self.width + ix


def traverse_ray(
    geom: GridGeometry, start: np.ndarray, end: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Cells crossed by the segment start -> end, ordered from start.

    Returns (cells, entry): flat cell indices and the distance in meters from
    `start` at which the segment enters each cell (0 for the start cell).
    Both endpoints must lie inside the grid; both endpoint cells are included.
    A segment passing exactly through a lattice corner emits both edge
    neighbors before the diagonal cell (supercover convention), sharing the
    corner's entry distance.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if not geom.contains_point(start) or not geom.contains_point(end):
        raise ValueError("segment endpoints must lie inside the grid")

    inv = 1.0 / geom.cell_size
    gax = (start[0] - geom.origin[0]) * inv
    gay = (start[1] - geom.origin[1]) * inv
    gbx = (end[0] - geom.origin[0]) * inv
    gby = (end[1] - geom.origin[1]) * inv
    dx = gbx - gax
    dy = gby - gay
    length_m = float(math.hypot(dx, dy) * geom.cell_size)

    def clamp(i: int, n: int) -> int:
        return min(max(i, 0), n - 1)

    ix = clamp(int(math.floor(gax)), geom.width)
    iy = clamp(int(math.floor(gay)), geom.height)
    jx = clamp(int(math.floor(gbx)), geom.width)
    jy = clamp(int(math.floor(gby)), geom.height)

    cells = [iy * geom.width + ix]
    entries = [0.0]
    if (ix, iy) == (jx, jy) or length_m == 0.0:
        if cells[0] != jy * geom.width + jx:
            cells.append(jy * geom.width + jx)
            entries.append(length_m)
        return np.asarray(cells, dtype=np.int32), np.asarray(entries, dtype=np.float64)

    sx = 1 if dx > 0 else (-1 if dx < 0 else 0)
    sy = 1 if dy > 0 else (-1 if dy < 0 else 0)
    t_dx = abs(1.0 / dx) if dx != 0 else math.inf
    t_dy = abs(1.0 / dy) if dy != 0 else math.inf
    if dx > 0:
        t_mx = (ix + 1 - gax) / dx
    elif dx < 0:
        t_mx = (ix - gax) / dx
    else:
        t_mx = math.inf
    if dy > 0:
        t_my = (iy + 1 - gay) / dy
    elif dy < 0:
        t_my = (iy - gay) / dy
    else:
        t_my = math.inf

    def emit(cx: int, cy: int, t: float) -> None:
        if 0 <= cx < geom.width and 0 <= cy < geom.height:
            cells.append(cy * geom.width + cx)
            entries.append(t * length_m)

    max_steps = 2 * (geom.width + geom.height) + 8
    for _ in range(max_steps):
        if (ix, iy) == (jx, jy):
            break
        if t_mx == t_my:
            # Exact corner crossing: supercover, both edge neighbors first.
            t = t_mx
            if t >= 1.0:
                break
            emit(ix + sx, iy, t)
            emit(ix, iy + sy, t)
            ix += sx
            iy += sy
            t_mx += t_dx
            t_my += t_dy
            emit(ix, iy, t)
        elif t_mx < t_my:
            t = t_mx
            if t >= 1.0:
                break
            ix += sx
            t_mx += t_dx
            emit(ix, iy, t)
        else:
            t = t_my
            if t >= 1.0:
                break
            iy += sy
            t_my += t_dy
            emit(ix, iy, t)

    end_cell = jy * geom.width + jx
    if cells[-1] != end_cell:
        # End point sits exactly on a boundary whose floor cell was never
        # entered through its interior; include it for the endpoint guarantee.
        cells.append(end_cell)
        entries.append(length_m)
    return np.asarray(cells, dtype=np.int32), np.asarray(entries, dtype=np.float64)


@dataclass(frozen=True)
class CameraRayTable:
    """Precomputed cells and ranges along every camera ray.

    Per-ray cell lists are concatenated: ray k occupies slots
    offsets[k]:offsets[k+1] of `cells` and `ranges`. A cell's range is the
    distance from the sensor to the midpoint of the chord the ray cuts
    through it, which is strictly increasing along the ray. in_lo/in_hi
    bound (half-open) the slots whose range falls within [r_min, r_max].
    """

    geom: GridGeometry
    num_rays: int
    angles: np.ndarray  # (R,) signed offset from the forward axis, radians
    cells: np.ndarray  # (K,) int32 flat cell indices, all rays concatenated
    ranges: np.ndarray  # (K,) float64 meters from the sensor
    offsets: np.ndarray  # (R+1,) int64 slot offsets per ray
    in_lo: np.ndarray  # (R,) int64 first in-range slot (absolute)
    in_hi: np.ndarray  # (R,) int64 one past last in-range slot (absolute)
    ray_of: np.ndarray = field(repr=False, default=None)  # (K,) int32 owner ray
    slot_of: np.ndarray = field(repr=False, default=None)  # (K,) int64 slot within ray

    def ray_cells(self, k: int) -> np.ndarray:
        return self.cells[self.offsets[k] : self.offsets[k + 1]]

    def ray_ranges(self, k: int) -> np.ndarray:
        return self.ranges[self.offsets[k] : self.offsets[k + 1]]

    @cached_property
    def covered_cells(self) -> np.ndarray:
        """Sorted unique cell indices that appear on at least one ray."""
        return np.unique(self.cells)

    @cached_property
    def covered_in_range(self) -> np.ndarray:
        """Sorted unique cell indices lying in [r_min, r_max] on some ray."""
        parts = [self.cells[self.in_lo[k] : self.in_hi[k]] for k in range(self.num_rays)]
        if not parts:
            return np.empty(0, dtype=np.int32)
        return np.unique(np.concatenate(parts))


def build_ray_table(geom: GridGeometry) -> CameraRayTable:
    """Cast all camera rays from the sensor to the grid border.

    Ray k leaves the sensor at angle (k + 0.5) / num_rays * fov - fov / 2
    from the forward (+y) axis, sweeping left to right.
    """
    sensor = np.asarray(geom.sensor_pos, dtype=np.float64)
    ex, ey = geom.extent
    xmin, ymin = geom.origin
    xmax, ymax = xmin + ex, ymin + ey

    angles = (np.arange(geom.num_rays) + 0.5) / geom.num_rays * geom.fov - geom.fov / 2
    all_cells: list[np.ndarray] = []
    all_ranges: list[np.ndarray] = []
    offsets = np.zeros(geom.num_rays + 1, dtype=np.int64)
    for k, phi in enumerate(angles):
        d = np.array([math.sin(phi), math.cos(phi)])
        ts = []
        for axis, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
            if d[axis] > 0:
                ts.append((hi - sensor[axis]) / d[axis])
            elif d[axis] < 0:
                ts.append((lo - sensor[axis]) / d[axis])
        t_exit = min(ts)
        end = sensor + t_exit * d
        end[0] = min(max(end[0], xmin), xmax)
        end[1] = min(max(end[1], ymin), ymax)
        cells, entry = traverse_ray(geom, sensor, end)
        length = float(np.hypot(*(end - sensor)))
        exit_ = np.append(entry[1:], length)
        all_cells.append(cells)
        all_ranges.append((entry + exit_) / 2)
        offsets[k + 1] = offsets[k] + len(cells)

    cells = np.concatenate(all_cells).astype(np.int32)
    ranges = np.concatenate(all_ranges)
    counts = np.diff(offsets)
    ray_of = np.repeat(np.arange(geom.num_rays, dtype=np.int32), counts)
    slot_of = np.arange(len(cells), dtype=np.int64) - np.repeat(offsets[:-1], counts)

    in_lo = np.empty(geom.num_rays, dtype=np.int64)
    in_hi = np.empty(geom.num_rays, dtype=np.int64)
    for k in range(geom.num_rays):
        r = ranges[offsets[k] : offsets[k + 1]]
        in_lo[k] = offsets[k] + int(np.searchsorted(r, geom.r_min, side="left"))
        in_hi[k] = offsets[k] + int(np.searchsorted(r, geom.r_max, side="right"))
    return CameraRayTable(
        geom=geom,
        num_rays=geom.num_rays,
        angles=angles,
        cells=cells,
        ranges=ranges,
        offsets=offsets,
        in_lo=in_lo,
        in_hi=in_hi,
        ray_of=ray_of,
        slot_of=slot_of,
    )


def los_mask(gt_occ: np.ndarray, rays: CameraRayTable) -> CellMask:
    """Cells with line of sight from the sensor given true occupancy.

    A cell is visible if it lies on some ray with no occupied cell strictly
    closer on that ray; the first occupied cell itself is visible. Cells on
    no ray are never visible.
    """
    gt_occ = np.asarray(gt_occ)
    occ_along = gt_occ[rays.cells].astype(np.int64)
    cum = np.cumsum(occ_along)
    excl = cum - occ_along  # occupied count strictly before, global
    counts = np.diff(rays.offsets)
    base = np.repeat(excl[rays.offsets[:-1]], counts) if len(occ_along) else excl
    visible_slots = (excl - base) == 0
    mask = np.zeros(gt_occ.shape[0], dtype=bool)
    mask[rays.cells[visible_slots]] = True
    return mask
