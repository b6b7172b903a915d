"""Light-curtain and LiDAR sensor simulation.

A curtain is one control point per camera ray (or none), each a depth slot
along that ray. Imaging a curtain against ground truth yields a per-ray
detection bit; detections and the curtain together induce a per-cell label
raster (FREE along the path to a detection, OCCUPIED at the detection).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import CameraRayTable, GridGeometry
from .grid import FREE, OCCUPIED, UNKNOWN, SensorNoiseModel

__all__ = [
    "UNKNOWN",
    "FREE",
    "OCCUPIED",
    "Curtain",
    "DetectionSet",
    "ObservationGrid",
    "image_curtain",
    "extract_observation",
    "random_curtain",
    "lidar_scan",
]

_OBS_MAGIC = b"OBS1"
_OBS_HEADER = struct.Struct("<4sIIdd")  # magic, width, height, cell_size, timestamp


@dataclass
class Curtain:
    """A curtain profile: per-ray depth slot indices, -1 where a ray is skipped.

    Slot k on ray r addresses the cell rays.cells[rays.offsets[r] + k]. Valid
    slots must fall inside the ray's in-range window.
    """

    slots: np.ndarray

    def __post_init__(self) -> None:
        self.slots = np.ascontiguousarray(self.slots, dtype=np.int32)
        if self.slots.ndim != 1:
            raise ValueError("curtain slots must be a 1-D array")

    @property
    def num_rays(self) -> int:
        return self.slots.shape[0]

    def validate(self, rays: CameraRayTable) -> None:
        """Raise unless every placed slot lies in its ray's range window."""
        if self.num_rays != rays.num_rays:
            raise ValueError("curtain ray count does not match the ray table")
        has = self.slots >= 0
        abs_slot = rays.offsets[:-1] + self.slots
        lo_ok = abs_slot[has] >= rays.in_lo[has]
        hi_ok = abs_slot[has] < rays.in_hi[has]
        if not (np.all(lo_ok) and np.all(hi_ok)):
            raise ValueError("curtain control point outside the sensing range")

    def cell_indices(self, rays: CameraRayTable) -> np.ndarray:
        """Grid cell index per placed ray (rays without a slot are dropped)."""
        has = self.slots >= 0
        return rays.cells[rays.offsets[:-1][has] + self.slots[has]]

    def ranges(self, rays: CameraRayTable) -> np.ndarray:
        """Control point range per placed ray, in meters."""
        has = self.slots >= 0
        return rays.ranges[rays.offsets[:-1][has] + self.slots[has]]


@dataclass
class DetectionSet:
    """Per-ray detection bits from imaging one curtain."""

    detected: np.ndarray

    def __post_init__(self) -> None:
        self.detected = np.ascontiguousarray(self.detected, dtype=bool)
        if self.detected.ndim != 1:
            raise ValueError("detections must be a 1-D array")

    @property
    def num_rays(self) -> int:
        return self.detected.shape[0]


@dataclass
class ObservationGrid:
    """Per-cell label raster (UNKNOWN / FREE / OCCUPIED) with a timestamp."""

    geom: GridGeometry
    labels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if self.labels.shape != (self.geom.n_cells,):
            raise ValueError("label raster does not match the grid geometry")
        if self.labels.max(initial=0) > OCCUPIED:
            raise ValueError("labels must be UNKNOWN, FREE, or OCCUPIED")

    @classmethod
    def unknown(cls, geom: GridGeometry, timestamp: float = 0.0) -> ObservationGrid:
        return cls(geom, np.full(geom.n_cells, UNKNOWN, dtype=np.uint8), timestamp)

    @property
    def observed_mask(self) -> np.ndarray:
        return self.labels != UNKNOWN

    def save(self, path) -> None:
        g = self.geom
        with open(path, "wb") as fh:
            fh.write(_OBS_HEADER.pack(_OBS_MAGIC, g.width, g.height, g.cell_size, self.timestamp))
            fh.write(self.labels.tobytes())

    @classmethod
    def load(cls, path, geom: GridGeometry | None = None) -> ObservationGrid:
        with open(path, "rb") as fh:
            magic, width, height, cell_size, ts = _OBS_HEADER.unpack(fh.read(_OBS_HEADER.size))
            if magic != _OBS_MAGIC:
                raise ValueError("not an observation raster file")
            if geom is None:
                geom = GridGeometry(width=width, height=height, cell_size=cell_size)
            elif (geom.width, geom.height) != (width, height):
                raise ValueError("observation file does not match the given geometry")
            labels = np.frombuffer(fh.read(width * height), dtype=np.uint8).copy()
        return cls(geom, labels, ts)


def _occluded_before(gt_occ: np.ndarray, rays: CameraRayTable) -> np.ndarray:
    """Per flat slot: count of occupied cells strictly earlier on the same ray."""
    along = gt_occ[rays.cells].astype(np.int64)
    cum = np.cumsum(along)
    excl = cum - along
    seg_base = np.repeat(excl[rays.offsets[:-1]], np.diff(rays.offsets))
    return excl - seg_base


def image_curtain(
    gt_occ: np.ndarray,
    curtain: Curtain,
    noise: SensorNoiseModel,
    rays: CameraRayTable,
    rng: np.random.Generator,
) -> DetectionSet:
    """Image one curtain against ground truth, with per-ray intensity noise.

    A control point returns light when its cell is occupied and no occupied
    cell sits strictly closer on the ray (occlusion). True returns are missed
    with probability alpha_fn; vacant control points fire with probability
    alpha_fp. One uniform is drawn per ray regardless of content, so the
    stream consumption is independent of the scene.
    """
    gt_occ = np.asarray(gt_occ, dtype=bool)
    curtain.validate(rays)
    u = rng.random(rays.num_rays)
    has = curtain.slots >= 0
    abs_slot = rays.offsets[:-1] + np.where(has, curtain.slots, 0)
    blocked = _occluded_before(gt_occ, rays)
    truth = has & gt_occ[rays.cells[abs_slot]] & (blocked[abs_slot] == 0)
    detected = np.where(truth, u >= noise.alpha_fn, u < noise.alpha_fp) & has
    return DetectionSet(detected=detected)


def extract_observation(
    curtain: Curtain,
    detections: DetectionSet,
    rays: CameraRayTable,
    timestamp: float = 0.0,
) -> ObservationGrid:
    """Turn per-ray detections into a per-cell label raster.

    Detected control cells are OCCUPIED and every ray cell strictly before
    them is FREE (the light passed through). Undetected control cells are
    FREE. Cells a ray crosses beyond its control point stay UNKNOWN. Where
    rays disagree about a shared cell, OCCUPIED wins.
    """
    curtain.validate(rays)
    if detections.num_rays != rays.num_rays:
        raise ValueError("detection count does not match the ray table")
    labels = np.full(rays.geom.n_cells, UNKNOWN, dtype=np.uint8)
    has = curtain.slots >= 0
    det = detections.detected & has
    abs_slot = rays.offsets[:-1] + np.where(has, curtain.slots, 0)

    # FREE pass: undetected control cells, then the approach path of each
    # detected ray (all slots strictly before the control point).
    labels[rays.cells[abs_slot[has & ~det]]] = FREE
    slot_ceiling = np.where(det, curtain.slots, np.int32(-1))
    approach = rays.slot_of < slot_ceiling[rays.ray_of]
    labels[rays.cells[approach]] = FREE

    # OCCUPIED pass wins ties against FREE from a crossing ray.
    labels[rays.cells[abs_slot[det]]] = OCCUPIED
    return ObservationGrid(rays.geom, labels, timestamp)


def random_curtain(rays: CameraRayTable, rng: np.random.Generator) -> Curtain:
    """Uniform random in-range slot per ray; rays with no in-range cells skip.

    One uniform per ray is always drawn, so stream consumption is fixed.
    """
    u = rng.random(rays.num_rays)
    k = (rays.in_hi - rays.in_lo).astype(np.int64)
    pick = np.minimum((u * k).astype(np.int64), np.maximum(k - 1, 0))
    rel = (rays.in_lo - rays.offsets[:-1]) + pick
    slots = np.where(k > 0, rel, -1).astype(np.int32)
    return Curtain(slots=slots)


def lidar_scan(
    gt_occ: np.ndarray,
    rays: CameraRayTable,
    noise: SensorNoiseModel,
    rng: np.random.Generator,
    timestamp: float = 0.0,
) -> ObservationGrid:
    """Simulate a full sweep: first return per ray, range-limited, with noise.

    Per ray, the first occupied cell within r_max returns. A return is
    suppressed with probability alpha_fn (the ray then reads as a miss); a
    ray with no return fires spuriously with probability alpha_fp at a
    uniform in-range slot. Hit rays label the approach FREE, the hit cell
    OCCUPIED, and everything beyond UNKNOWN; miss rays label every cell out
    to r_max FREE. Two uniforms are drawn per ray regardless of content.
    """
    gt_occ = np.asarray(gt_occ, dtype=bool)
    u = rng.random(rays.num_rays)
    u_slot = rng.random(rays.num_rays)

    blocked = _occluded_before(gt_occ, rays)
    first_hit = gt_occ[rays.cells] & (blocked == 0)
    hit_flat = np.flatnonzero(first_hit)
    hit_abs = np.full(rays.num_rays, -1, dtype=np.int64)
    hit_abs[rays.ray_of[hit_flat]] = hit_flat
    in_reach = (hit_abs >= 0) & (hit_abs < rays.in_hi)  # range <= r_max

    survives = in_reach & (u >= noise.alpha_fn)
    k = (rays.in_hi - rays.in_lo).astype(np.int64)
    fires = ~in_reach & (u < noise.alpha_fp) & (k > 0)
    spur_abs = rays.in_lo + np.minimum((u_slot * k).astype(np.int64), np.maximum(k - 1, 0))

    report = np.where(survives, hit_abs, np.where(fires, spur_abs, -1))

    labels = np.full(rays.geom.n_cells, UNKNOWN, dtype=np.uint8)
    # FREE pass: approach path of reporting rays, full in-reach span of the rest.
    ray_report = report[rays.ray_of]
    flat = np.arange(rays.cells.shape[0])
    approach = (ray_report >= 0) & (flat < ray_report)
    miss_span = (ray_report < 0) & (flat < rays.in_hi[rays.ray_of])
    labels[rays.cells[approach | miss_span]] = FREE
    labels[rays.cells[report[report >= 0]]] = OCCUPIED
    return ObservationGrid(rays.geom, labels, timestamp)
