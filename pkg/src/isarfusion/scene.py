"""Ground-truth target kinematics and extended-target scatterer geometry.

Trajectories are chains of constant turn-rate segments driven at constant
speed, so every trajectory is C1 and its yaw rate is piecewise constant.
The four canonical junction manoeuvres are solved so that they start and end
exactly at the junction lane coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import fsolve

from .constants import SPEED_OF_LIGHT

__all__ = [
    "CANONICAL_TRAJECTORIES",
    "EgoSensorLayout",
    "Scatterers",
    "TargetModel",
    "TargetState",
    "TrajectorySpec",
    "facet_rcs",
    "sample_state",
    "scatterer_snapshot",
]

_STRAIGHT_EPS = 1e-12


@dataclass(frozen=True)
class _Canonical:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    heading: float
    turn: float
    lead_omega: float
    trail_omega: float


# (lead, trail) yaw rates shape the entry and exit legs; the middle arc and the
# leg durations are solved for. SSUT/ENRT/WSRT legs curve gently so that the
# target keeps changing aspect for almost the whole run, NNUT is straight-arc-straight.
CANONICAL_TRAJECTORIES: dict[str, _Canonical] = {
    "SSUT": _Canonical((20.0, 39.5, 0.0), (20.0, 35.4, 0.0), 0.0, -np.pi, 0.3, 0.3),
    "NNUT": _Canonical((58.0, 39.0, 0.0), (58.0, 42.6, 0.0), np.pi, -np.pi, 0.0, 0.0),
    "ENRT": _Canonical((39.0, 20.0, 0.0), (58.0, 42.6, 0.0), np.pi / 2, -np.pi / 2, -0.05, -0.05),
    "WSRT": _Canonical((39.0, 58.0, 0.0), (20.0, 35.4, 0.0), -np.pi / 2, -np.pi / 2, -0.05, -0.05),
}


def _advance(x, y, heading, speed, omega, dt):
    """Exact constant turn-rate motion over ``dt``; returns (x, y, heading)."""
    if abs(omega) < _STRAIGHT_EPS:
        return (x + speed * dt * np.cos(heading),
                y + speed * dt * np.sin(heading),
                heading)
    h1 = heading + omega * dt
    r = speed / omega
    return (x + r * (np.sin(h1) - np.sin(heading)),
            y + r * (np.cos(heading) - np.cos(h1)),
            h1)


def _integrate(start, heading, speed, segments):
    x, y, h = start[0], start[1], heading
    for dt, omega in segments:
        x, y, h = _advance(x, y, h, speed, omega, dt)
    return x, y, h


def _solve_canonical(c: _Canonical, speed: float, duration: float):
    def residual(u):
        t_lead, omega_mid, t_trail = u
        segs = [(t_lead, c.lead_omega),
                (duration - t_lead - t_trail, omega_mid),
                (t_trail, c.trail_omega)]
        x, y, h = _integrate(c.start, c.heading, speed, segs)
        return [x - c.end[0], y - c.end[1], h - c.heading - c.turn]

    best = None
    for guess in ([duration / 3, c.turn / (duration / 3), duration / 3],
                  [duration / 2.5, c.turn, duration / 2.5],
                  [duration * 0.45, c.turn / 0.5, duration * 0.45]):
        u, info, ier, _ = fsolve(residual, guess, full_output=True, xtol=1e-14)
        err = np.max(np.abs(residual(u)))
        t_mid = duration - u[0] - u[2]
        if err < 1e-9 and u[0] >= 0 and u[2] >= 0 and t_mid > 0:
            best = u
            break
    if best is None:
        raise ValueError("could not fit a constant turn-rate path to the endpoints")
    t_lead, omega_mid, t_trail = best
    return ((float(t_lead), c.lead_omega),
            (float(duration - t_lead - t_trail), float(omega_mid)),
            (float(t_trail), c.trail_omega))


@dataclass(frozen=True)
class TrajectorySpec:
    """A constant-speed path made of constant yaw-rate segments.

    Parameters
    ----------
    kind : str
        ``"SSUT"``, ``"NNUT"``, ``"ENRT"``, ``"WSRT"`` or ``"Custom"``.
    start_position, end_position : tuple of float
        World coordinates in metres. For canonical kinds these are the lane
        coordinates of the junction; the end position of a custom path is
        derived from its segments.
    speed : float
        Ground speed in m/s.
    duration : float
        Total duration in seconds; equals the sum of segment durations.
    start_heading : float
        Initial heading in radians from the +X axis.
    segments : tuple of (duration, yaw_rate)
        The waypoint list of the path, one entry per constant-turn segment.
    """

    kind: str
    start_position: tuple
    end_position: tuple
    speed: float
    duration: float
    start_heading: float
    segments: tuple

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("speed must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if any(dt < 0 for dt, _ in self.segments):
            raise ValueError("segment durations must be non-negative")
        total = sum(dt for dt, _ in self.segments)
        if abs(total - self.duration) > 1e-9:
            raise ValueError(f"segments span {total} s, expected {self.duration} s")

    @classmethod
    def canonical(cls, kind: str, speed: float = 6.0, duration: float = 6.0) -> "TrajectorySpec":
        c = CANONICAL_TRAJECTORIES[kind.upper()]
        segments = _solve_canonical(c, speed, duration)
        return cls(kind.upper(), c.start, c.end, speed, duration, c.heading, segments)

    @classmethod
    def custom(cls, start_position, start_heading, segments, speed=6.0) -> "TrajectorySpec":
        segments = tuple((float(dt), float(w)) for dt, w in segments)
        duration = sum(dt for dt, _ in segments)
        start = tuple(float(v) for v in start_position)
        if len(start) == 2:
            start = start + (0.0,)
        x, y, _ = _integrate(start, start_heading, speed, segments)
        return cls("Custom", start, (float(x), float(y), start[2]), speed, duration,
                   float(start_heading), segments)

    def boundaries(self) -> np.ndarray:
        """Segment start times plus the final time."""
        return np.concatenate([[0.0], np.cumsum([dt for dt, _ in self.segments])])


@dataclass(frozen=True)
class TargetState:
    """Kinematic state of the tracked target centroid (world frame)."""

    x: float
    y: float
    vx: float
    vy: float
    omega: float
    t: float = 0.0

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.vy, self.vx))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy, self.omega])


def sample_state(spec: TrajectorySpec, t: float) -> TargetState:
    """Ground-truth state of the trajectory at time ``t``.

    At a segment boundary the yaw rate of the segment that starts there is
    returned (the final instant reports the last segment's rate).
    """
    if not (0.0 <= t <= spec.duration + 1e-12):
        raise ValueError(f"t={t} outside [0, {spec.duration}]")
    x, y, h = spec.start_position[0], spec.start_position[1], spec.start_heading
    elapsed = 0.0
    omega = spec.segments[-1][1]
    for i, (dt, w) in enumerate(spec.segments):
        last = i == len(spec.segments) - 1
        if t < elapsed + dt or last:
            tau = min(max(t - elapsed, 0.0), dt)
            x, y, h = _advance(x, y, h, spec.speed, w, tau)
            omega = w
            break
        x, y, h = _advance(x, y, h, spec.speed, w, dt)
        elapsed += dt
    return TargetState(float(x), float(y), float(spec.speed * np.cos(h)),
                       float(spec.speed * np.sin(h)), float(omega), float(t))


@dataclass(frozen=True)
class EgoSensorLayout:
    """Static ego vehicle with a forward radar and a forward camera.

    Sensor axes are aligned with the world axes (zero yaw, pitch and roll).
    The camera sits ``camera_setback`` behind the front bumper, i.e. above
    the front axle for the default 0.9 m front overhang.
    """

    ego_center: tuple = (10.0, 42.6, 0.7)
    ego_size: tuple = (4.7, 1.8, 1.4)
    radar_height: float = 0.1
    camera_setback: float = 0.9
    camera_below_roof: float = 0.1

    @property
    def radar_position(self) -> np.ndarray:
        cx, cy, _ = self.ego_center
        return np.array([cx + self.ego_size[0] / 2, cy, self.radar_height])

    @property
    def camera_position(self) -> np.ndarray:
        cx, cy, cz = self.ego_center
        roof = cz + self.ego_size[2] / 2
        return np.array([cx + self.ego_size[0] / 2 - self.camera_setback, cy,
                         roof - self.camera_below_roof])


# Cuboid faces as vertex index quads (counter-clockwise seen from outside).
_FACES = (
    (1, 2, 6, 5),  # +x front
    (0, 4, 7, 3),  # -x rear
    (2, 3, 7, 6),  # +y
    (0, 1, 5, 4),  # -y
    (4, 5, 6, 7),  # top
    (0, 3, 2, 1),  # bottom
)


@dataclass(frozen=True)
class TargetModel:
    """Cuboid vehicle meshed into 12 triangular facets.

    The body frame has +x forward, +y left and +z up, with the origin at the
    centre of the footprint on the ground. ``points_per_facet`` > 0 switches
    to the dense point-cloud mode in which each facet is represented by
    uniformly sampled interior points sharing the facet amplitude.
    """

    length: float = 4.7
    width: float = 1.8
    height: float = 1.4
    reflectivity: tuple = (1.0,) * 12
    points_per_facet: int = 0
    sampling_seed: int = 0

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("cuboid dimensions must be positive")
        if len(self.reflectivity) != 12:
            raise ValueError("one reflectivity per facet is required")

    @cached_property
    def corners(self) -> np.ndarray:
        hl, hw, h = self.length / 2, self.width / 2, self.height
        return np.array([
            [-hl, -hw, 0], [hl, -hw, 0], [hl, hw, 0], [-hl, hw, 0],
            [-hl, -hw, h], [hl, -hw, h], [hl, hw, h], [-hl, hw, h],
        ], dtype=float)

    @cached_property
    def facets(self) -> np.ndarray:
        """(12, 3, 3) triangle vertices in the body frame, outward winding."""
        tris = []
        for a, b, c, d in _FACES:
            tris.append(self.corners[[a, b, c]])
            tris.append(self.corners[[a, c, d]])
        return np.array(tris)

    @cached_property
    def normals(self) -> np.ndarray:
        f = self.facets
        n = np.cross(f[:, 1] - f[:, 0], f[:, 2] - f[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def areas(self) -> np.ndarray:
        f = self.facets
        return 0.5 * np.linalg.norm(np.cross(f[:, 1] - f[:, 0], f[:, 2] - f[:, 0]), axis=1)

    @cached_property
    def body_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Scatterer positions in the body frame and their facet index."""
        f = self.facets
        if self.points_per_facet <= 0:
            return f.mean(axis=1), np.arange(12)
        rng = np.random.default_rng(self.sampling_seed)
        n = self.points_per_facet
        u = rng.random((12, n))
        v = rng.random((12, n))
        su = np.sqrt(u)
        w0, w1, w2 = 1 - su, su * (1 - v), su * v
        pts = (w0[..., None] * f[:, None, 0] + w1[..., None] * f[:, None, 1]
               + w2[..., None] * f[:, None, 2])
        return pts.reshape(-1, 3), np.repeat(np.arange(12), n)


def facet_rcs(triangle, wavelength: float, incidence_angle: float) -> float:
    """Physical-optics RCS (m^2) of a flat metal triangle.

    ``4 pi A^2 / lambda^2`` at normal incidence, tapered by ``cos^2`` of the
    angle between the facet normal and the line of sight. Zero beyond
    grazing and for degenerate triangles.
    """
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    tri = np.asarray(triangle, dtype=float)
    area = 0.5 * np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    c = np.cos(incidence_angle)
    if area == 0.0 or c <= 0.0:
        return 0.0
    return float(4 * np.pi * area**2 / wavelength**2 * c**2)


@dataclass
class Scatterers:
    """Point-scatterer snapshot of the target as seen from one sensor."""

    position: np.ndarray          # (N, 3) world frame, m
    reflectivity: np.ndarray      # (N,) amplitude, sqrt(m^2)
    radial_velocity: np.ndarray   # (N,) m/s, positive receding
    visible: np.ndarray           # (N,) bool
    facet: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def __len__(self):
        return len(self.reflectivity)

    def select(self, mask) -> "Scatterers":
        return Scatterers(self.position[mask], self.reflectivity[mask],
                          self.radial_velocity[mask], self.visible[mask],
                          self.facet[mask] if len(self.facet) else self.facet)


def _rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def body_to_world(points, state: TargetState) -> np.ndarray:
    """Rotate body-frame points by the heading and translate to the centroid."""
    return np.asarray(points) @ _rotation(state.yaw).T + np.array([state.x, state.y, 0.0])


def scatterer_snapshot(model: TargetModel, state: TargetState, sensor_position,
                       wavelength: float = SPEED_OF_LIGHT / 77e9,
                       shadowing: bool = True) -> Scatterers:
    """Scatterers of ``model`` at ``state`` seen from ``sensor_position``.

    The cuboid is convex, so a facet is self-shadowed exactly when its outward
    normal points away from the sensor. With ``shadowing=False`` every facet
    is reported visible and amplitudes use the absolute incidence cosine.
    """
    sensor = np.asarray(sensor_position, dtype=float)
    rot = _rotation(state.yaw)
    body_pts, facet_idx = model.body_points
    pts = body_pts @ rot.T + np.array([state.x, state.y, 0.0])
    normals = model.normals @ rot.T

    los = sensor - pts
    dist = np.linalg.norm(los, axis=1)
    los_unit = los / dist[:, None]
    cos_inc = np.einsum("ij,ij->i", normals[facet_idx], los_unit)

    visible = cos_inc > 0 if shadowing else np.ones(len(pts), bool)
    cos_eff = np.clip(cos_inc if shadowing else np.abs(cos_inc), 0.0, 1.0)
    sigma0 = 4 * np.pi * model.areas**2 / wavelength**2
    amp = np.sqrt(sigma0[facet_idx]) * cos_eff * np.asarray(model.reflectivity)[facet_idx]
    if model.points_per_facet > 0:
        amp = amp / model.points_per_facet

    lever = pts[:, :2] - np.array([state.x, state.y])
    vel = np.zeros_like(pts)
    vel[:, 0] = state.vx - state.omega * lever[:, 1]
    vel[:, 1] = state.vy + state.omega * lever[:, 0]
    radial = np.einsum("ij,ij->i", vel, -los_unit)
    return Scatterers(pts, amp, radial, visible, facet_idx)
