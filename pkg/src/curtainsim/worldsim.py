"""Ground-truth world: parametric 2D obstacles on analytic or random paths.

Shapes are axis-aligned rectangles and circles; trajectories are harmonic
oscillation, forward drift with a lateral sinusoid, reflected Brownian
motion, and static poses. Rasterization marks a cell occupied when its
center falls inside any object footprint and stamps that object's current
velocity (first object wins overlaps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridGeometry

__all__ = [
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
]

_TIME_EPS = 1e-12


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.hypot(v[0], v[1]))
    if n <= 0.0:
        raise ValueError("direction vector must be nonzero")
    return v / n


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box footprint, dimensions in meters."""

    width: float
    height: float

    def __post_init__(self) -> None:
        if self.width <= 0.0 or self.height <= 0.0:
            raise ValueError("rectangle dimensions must be positive")

    def contains(self, centers: np.ndarray, pos: np.ndarray) -> np.ndarray:
        d = np.abs(centers - pos)
        return (d[:, 0] <= 0.5 * self.width) & (d[:, 1] <= 0.5 * self.height)


@dataclass(frozen=True)
class Circle:
    """Disc footprint, radius in meters."""

    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError("circle radius must be positive")

    def contains(self, centers: np.ndarray, pos: np.ndarray) -> np.ndarray:
        d = centers - pos
        return d[:, 0] ** 2 + d[:, 1] ** 2 <= self.radius**2


@dataclass(frozen=True)
class Harmonic:
    """Oscillation along a fixed axis: center + A sin(2 pi f t + phase) d."""

    center: tuple[float, float]
    amplitude: float
    frequency: float
    phase: float = 0.0
    direction: tuple[float, float] = (1.0, 0.0)

    def __post_init__(self) -> None:
        if self.amplitude < 0.0 or self.frequency < 0.0:
            raise ValueError("amplitude and frequency must be nonnegative")
        object.__setattr__(self, "direction", tuple(_unit(self.direction)))

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        w = 2.0 * math.pi * self.frequency
        d = np.asarray(self.direction)
        c = np.asarray(self.center, dtype=np.float64)
        pos = c + self.amplitude * math.sin(w * t + self.phase) * d
        vel = self.amplitude * w * math.cos(w * t + self.phase) * d
        return pos, vel

    def max_speed(self) -> float:
        return 2.0 * math.pi * self.frequency * self.amplitude


@dataclass(frozen=True)
class Sinusoid:
    """Forward drift with a lateral sinusoid; optional ping-pong path.

    With path_length set, forward progress folds into [0, path_length] as a
    triangle wave so the object shuttles back and forth along the path.
    """

    start: tuple[float, float]
    direction: tuple[float, float]
    speed: float
    lateral_amplitude: float = 0.0
    lateral_frequency: float = 0.0
    path_length: float | None = None

    def __post_init__(self) -> None:
        if self.speed < 0.0 or self.lateral_amplitude < 0.0 or self.lateral_frequency < 0.0:
            raise ValueError("speed, amplitude, and frequency must be nonnegative")
        if self.path_length is not None and self.path_length <= 0.0:
            raise ValueError("path_length must be positive")
        object.__setattr__(self, "direction", tuple(_unit(self.direction)))

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        d = np.asarray(self.direction)
        normal = np.array([-d[1], d[0]])
        s = self.speed * t
        ds = self.speed
        if self.path_length is not None:
            span = 2.0 * self.path_length
            u = math.fmod(s, span)
            if u <= self.path_length:
                s = u
            else:
                s = span - u
                ds = -ds
        w = 2.0 * math.pi * self.lateral_frequency
        lat = self.lateral_amplitude * math.sin(w * t)
        dlat = self.lateral_amplitude * w * math.cos(w * t)
        pos = np.asarray(self.start, dtype=np.float64) + s * d + lat * normal
        vel = ds * d + dlat * normal
        return pos, vel

    def max_speed(self) -> float:
        lat = 2.0 * math.pi * self.lateral_frequency * self.lateral_amplitude
        return math.hypot(self.speed, lat)


@dataclass
class Brownian:
    """Reflected random walk; state advances only when explicitly stepped.

    pos(t + dt) = reflect(pos(t) + N(0, sigma^2 dt I)) into the bounds box;
    the reported velocity is displacement over dt. Time never rewinds.
    """

    start: tuple[float, float]
    sigma: float
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    _pos: np.ndarray = field(init=False, repr=False)
    _vel: np.ndarray = field(init=False, repr=False)
    _t: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self) -> None:
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("bounds box must have positive extent")
        if not (xmin <= self.start[0] <= xmax and ymin <= self.start[1] <= ymax):
            raise ValueError("start must lie inside the bounds box")
        self._pos = np.asarray(self.start, dtype=np.float64).copy()
        self._vel = np.zeros(2)

    @staticmethod
    def _reflect(x: float, lo: float, hi: float) -> float:
        span = hi - lo
        y = math.fmod(x - lo, 2.0 * span)
        if y < 0.0:
            y += 2.0 * span
        if y > span:
            y = 2.0 * span - y
        return lo + y

    def step_to(self, t: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        if t < self._t - _TIME_EPS:
            raise ValueError("Brownian trajectory cannot rewind")
        dt = t - self._t
        if dt > _TIME_EPS:
            if rng is None:
                raise ValueError("Brownian stepping needs a random generator")
            xmin, ymin, xmax, ymax = self.bounds
            jump = rng.standard_normal(2) * (self.sigma * math.sqrt(dt))
            new = np.array(
                [
                    self._reflect(self._pos[0] + jump[0], xmin, xmax),
                    self._reflect(self._pos[1] + jump[1], ymin, ymax),
                ]
            )
            self._vel = (new - self._pos) / dt
            self._pos = new
            self._t = t
        return self._pos.copy(), self._vel.copy()


@dataclass(frozen=True)
class Static:
    """Fixed pose, zero velocity."""

    position: tuple[float, float]

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.position, dtype=np.float64), np.zeros(2)


@dataclass(frozen=True)
class SceneObject:
    shape: Rectangle | Circle
    trajectory: Harmonic | Sinusoid | Brownian | Static


@dataclass(frozen=True)
class GroundTruth:
    """Rasterized state: per-cell occupancy and (object) velocity at one time."""

    occ: np.ndarray
    vel: np.ndarray
    timestamp: float

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.vel)):
            raise ValueError("ground-truth velocities must be finite")
        if np.any(self.vel[~self.occ] != 0.0):
            raise ValueError("unoccupied cells must carry zero velocity")


def step_trajectory(obj, t: float, rng: np.random.Generator | None = None):
    """Position and velocity of one object (or bare trajectory) at time t.

    Deterministic trajectories are evaluated analytically and ignore rng;
    Brownian ones advance their internal state to t (never backwards).
    """
    if t < 0.0:
        raise ValueError("time must be nonnegative")
    traj = obj.trajectory if isinstance(obj, SceneObject) else obj
    if isinstance(traj, Brownian):
        return traj.step_to(t, rng)
    return traj.at(t)


@dataclass
class Scene:
    """An ordered list of objects; order decides overlap ownership."""

    objects: list[SceneObject]

    def max_speed(self) -> float:
        """Analytic speed bound over deterministic objects (inf for Brownian)."""
        worst = 0.0
        for obj in self.objects:
            traj = obj.trajectory
            if isinstance(traj, (Harmonic, Sinusoid)):
                worst = max(worst, traj.max_speed())
            elif isinstance(traj, Brownian):
                return math.inf
        return worst


def rasterize(
    scene: Scene,
    t: float,
    geom: GridGeometry,
    rng: np.random.Generator | None = None,
) -> GroundTruth:
    """Rasterize the scene at time t onto the grid.

    A cell is occupied iff its center lies inside some object footprint; the
    earliest such object's velocity is stamped. Footprints outside the grid
    simply cover no cells.
    """
    centers = geom.cell_centers
    occ = np.zeros(geom.n_cells, dtype=bool)
    vel = np.zeros((geom.n_cells, 2))
    for obj in scene.objects:
        pos, v = step_trajectory(obj, t, rng)
        inside = obj.shape.contains(centers, pos)
        new = inside & ~occ
        vel[new] = v
        occ |= inside
    return GroundTruth(occ=occ, vel=vel, timestamp=t)


def sim_default_scene(extent: tuple[float, float] = (8.0, 8.0)) -> Scene:
    """The stock benchmark scene, scaled to the grid extent.

    Two static walls hug the left and right edges; a harmonic rectangle
    sweeps side to side mid-grid; a circle drifts forward along a folded
    path while weaving laterally; a second circle wanders as Brownian
    motion inside a center box.
    """
    ex, ey = float(extent[0]), float(extent[1])
    sx, sy = ex / 8.0, ey / 8.0
    walls = [
        SceneObject(
            shape=Rectangle(width=0.3 * sx, height=7.0 * sy),
            trajectory=Static(position=(0.2 * sx, 4.2 * sy)),
        ),
        SceneObject(
            shape=Rectangle(width=0.3 * sx, height=7.0 * sy),
            trajectory=Static(position=(7.8 * sx, 4.2 * sy)),
        ),
    ]
    movers = [
        SceneObject(
            shape=Rectangle(width=1.0 * sx, height=0.6 * sy),
            trajectory=Harmonic(
                center=(3.0 * sx, 4.5 * sy),
                amplitude=1.0 * sx,
                frequency=0.25,
                direction=(1.0, 0.0),
            ),
        ),
        SceneObject(
            shape=Circle(radius=0.4 * min(sx, sy)),
            trajectory=Sinusoid(
                start=(5.2 * sx, 2.2 * sy),
                direction=(0.0, 1.0),
                speed=0.5,
                lateral_amplitude=0.8 * sx,
                lateral_frequency=0.2,
                path_length=4.2 * sy,
            ),
        ),
        SceneObject(
            shape=Circle(radius=0.4 * min(sx, sy)),
            trajectory=Brownian(
                start=(4.0 * sx, 6.0 * sy),
                sigma=0.5,
                bounds=(1.0 * sx, 2.5 * sy, 7.0 * sx, 7.2 * sy),
            ),
        ),
    ]
    return Scene(objects=walls + movers)
