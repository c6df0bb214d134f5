"""Radar-camera fusion with a constant turn-rate and velocity (CTRV) EKF.

The state ``[x, y, vx, vy, omega]`` is expressed relative to the radar, with
axes parallel to the world axes. Measurements are radar range, radar Doppler
and the lateral pixel coordinate of the camera detection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import SPEED_OF_LIGHT

__all__ = [
    "FusedMeasurement",
    "FusedState",
    "GainReport",
    "GateResult",
    "MeasurementModel",
    "NoiseConfig",
    "Tracker",
    "TrackRow",
    "ekf_step",
    "gate",
    "initial_state",
    "predict",
    "transition",
    "transition_jacobian",
    "update",
]

STRAIGHT_LINE_THRESHOLD = 1e-6
N_STATE = 5


@dataclass
class FusedState:
    x: np.ndarray
    P: np.ndarray
    k: int = 0
    t: float = 0.0

    def copy(self) -> "FusedState":
        return FusedState(self.x.copy(), self.P.copy(), self.k, self.t)

    @property
    def range(self) -> float:
        return float(np.hypot(self.x[0], self.x[1]))

    @property
    def radial_velocity(self) -> float:
        return float((self.x[0] * self.x[2] + self.x[1] * self.x[3]) / self.range)

    @property
    def omega(self) -> float:
        return float(self.x[4])


@dataclass(frozen=True)
class NoiseConfig:
    """Process and measurement noise.

    ``process_model`` selects the noise-gain matrix: ``"turn"`` orients the
    acceleration noise by ``omega T``, ``"heading"`` by the velocity heading.
    """

    sigma_a: float = 1.0
    sigma_alpha: float = 2.0
    sigma_range: float = 0.1
    sigma_doppler: float = 10.0
    sigma_pixel: float = 7.5
    T: float = 0.1
    process_model: str = "turn"

    def __post_init__(self):
        if min(self.sigma_range, self.sigma_doppler, self.sigma_pixel) <= 0:
            raise ValueError("measurement variances must be positive")
        if self.sigma_a < 0 or self.sigma_alpha < 0 or self.T <= 0:
            raise ValueError("process noise must be non-negative and T positive")
        if self.process_model not in ("turn", "heading"):
            raise ValueError("process_model must be 'turn' or 'heading'")

    @property
    def R(self) -> np.ndarray:
        return np.diag([self.sigma_range**2, self.sigma_doppler**2, self.sigma_pixel**2])


@dataclass
class FusedMeasurement:
    """Measurement vector; ``None`` marks a missing component."""

    r: float | None = None
    f_d: float | None = None
    pixel: float | None = None
    k: int = 0

    @property
    def available(self) -> np.ndarray:
        return np.array([v is not None for v in (self.r, self.f_d, self.pixel)])

    def vector(self) -> np.ndarray:
        return np.array([np.nan if v is None else float(v) for v in (self.r, self.f_d, self.pixel)])


def _sin_over(w, T):
    wt = w * T
    if abs(wt) < 1e-4:
        return T * (1 - wt**2 / 6)
    return np.sin(wt) / w


def _one_minus_cos_over(w, T):
    wt = w * T
    if abs(wt) < 1e-4:
        return T * wt / 2 * (1 - wt**2 / 12)
    return 2 * np.sin(wt / 2) ** 2 / w


def transition(x, T: float) -> np.ndarray:
    """CTRV mean propagation over ``T``; straight line when ``|omega T|`` is tiny."""
    px, py, vx, vy, w = x
    if abs(w * T) < STRAIGHT_LINE_THRESHOLD:
        return np.array([px + vx * T, py + vy * T, vx, vy, w])
    s, c = np.sin(w * T), np.cos(w * T)
    a, b = _sin_over(w, T), _one_minus_cos_over(w, T)
    return np.array([
        px + vx * a - vy * b,
        py + vx * b + vy * a,
        vx * c - vy * s,
        vx * s + vy * c,
        w,
    ])


def transition_jacobian(x, T: float) -> np.ndarray:
    px, py, vx, vy, w = x
    wt = w * T
    s, c = np.sin(wt), np.cos(wt)
    a = _sin_over(w, T)
    b = _one_minus_cos_over(w, T)
    if abs(wt) < 1e-4:
        da = -w * T**3 / 3
        db = T**2 / 2 - w**2 * T**4 / 8
    else:
        da = (T * c * w - s) / w**2
        db = (T * s * w - (1 - c)) / w**2
    F = np.eye(N_STATE)
    F[0, 2], F[0, 3], F[0, 4] = a, -b, vx * da - vy * db
    F[1, 2], F[1, 3], F[1, 4] = b, a, vx * db + vy * da
    F[2, 2], F[2, 3], F[2, 4] = c, -s, -T * (vx * s + vy * c)
    F[3, 2], F[3, 3], F[3, 4] = s, c, T * (vx * c - vy * s)
    return F


def noise_gain(x, T: float, model: str = "turn") -> np.ndarray:
    """5x2 map from (acceleration, yaw acceleration) noise to the state."""
    angle = x[4] * T if model == "turn" else np.arctan2(x[3], x[2])
    ca, sa = np.cos(angle), np.sin(angle)
    return np.array([
        [T**2 / 2 * ca, 0.0],
        [T**2 / 2 * sa, 0.0],
        [T * ca, 0.0],
        [T * sa, 0.0],
        [0.0, T],
    ])


def _symmetrize(P):
    return 0.5 * (P + P.T)


def predict(state: FusedState, noise: NoiseConfig, T: float | None = None) -> FusedState:
    """Propagate mean and covariance by one update interval (or ``T``)."""
    T = noise.T if T is None else T
    F = transition_jacobian(state.x, T)
    G = noise_gain(state.x, T, noise.process_model)
    Q = G @ np.diag([noise.sigma_a**2, noise.sigma_alpha**2]) @ G.T
    P = _symmetrize(F @ state.P @ F.T + Q)
    return FusedState(transition(state.x, T), P, state.k + 1, state.t + T)


class MeasurementModel:
    """Maps the state to (range, Doppler, lateral pixel).

    Parameters
    ----------
    carrier_frequency : float
        Radar carrier in Hz.
    projection : ndarray
        3x4 camera projection matrix in world coordinates.
    radar_position : array_like
        Radar location in world coordinates; the state is relative to it.
    reference_height : float
        World height of the tracked point used for the camera projection.
    literal_doppler : bool
        Use ``(2 f_c / c)(2 x vx / r + 2 y vy / r)`` instead of the radial
        velocity Doppler ``(2 f_c / c)(x vx + y vy) / r``.
    """

    def __init__(self, carrier_frequency, projection, radar_position, reference_height=0.7,
                 literal_doppler=False):
        self.carrier_frequency = float(carrier_frequency)
        self.P = np.asarray(projection, dtype=float)
        self.radar_position = np.asarray(radar_position, dtype=float)
        self.reference_height = float(reference_height)
        self.literal_doppler = literal_doppler

    @property
    def doppler_scale(self) -> float:
        k = 2 * self.carrier_frequency / SPEED_OF_LIGHT
        return 2 * k if self.literal_doppler else k

    def world_point(self, x) -> np.ndarray:
        return np.array([self.radar_position[0] + x[0], self.radar_position[1] + x[1],
                         self.reference_height, 1.0])

    def h(self, x) -> np.ndarray:
        px, py, vx, vy, _ = x
        r = np.hypot(px, py)
        if r == 0:
            raise ZeroDivisionError("range is zero; Doppler and bearing are undefined")
        fd = self.doppler_scale * (px * vx + py * vy) / r
        hw = self.P @ self.world_point(x)
        return np.array([r, fd, hw[1] / hw[0]])

    def H(self, x) -> np.ndarray:
        px, py, vx, vy, _ = x
        r = np.hypot(px, py)
        if r == 0:
            raise ZeroDivisionError("range is zero; Doppler and bearing are undefined")
        k = self.doppler_scale
        rr = (px * vx + py * vy) / r
        hw = self.P @ self.world_point(x)
        den, num = hw[0], hw[1]
        H = np.zeros((3, N_STATE))
        H[0, 0], H[0, 1] = px / r, py / r
        H[1, 0] = k * (vx - rr * px / r) / r
        H[1, 1] = k * (vy - rr * py / r) / r
        H[1, 2], H[1, 3] = k * px / r, k * py / r
        for j in range(2):
            H[2, j] = (self.P[1, j] * den - num * self.P[0, j]) / den**2
        return H

    def pixel(self, x) -> float:
        hw = self.P @ self.world_point(x)
        return float(hw[1] / hw[0])


@dataclass
class GainReport:
    """Kalman gain laid out as (measurement, state) with zeros for missing inputs."""

    gain: np.ndarray = field(default_factory=lambda: np.zeros((3, N_STATE)))
    innovation: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))
    condition: float = np.nan


def update(prior: FusedState, z: FusedMeasurement, model: MeasurementModel, noise: NoiseConfig,
           joseph: bool = True) -> tuple[FusedState, GainReport]:
    """Correct a predicted state with the available measurement components.

    Missing components get zero gain (their rows are dropped); with every
    component missing the prior is returned unchanged.
    """
    avail = z.available
    report = GainReport()
    if not avail.any():
        return prior.copy(), report
    idx = np.nonzero(avail)[0]
    H = model.H(prior.x)[idx]
    R = noise.R[np.ix_(idx, idx)]
    innov = z.vector()[idx] - model.h(prior.x)[idx]
    S = H @ prior.P @ H.T + R
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e15:
        raise np.linalg.LinAlgError(f"innovation covariance is singular (cond={cond:.3g})")
    K = np.linalg.solve(S, H @ prior.P).T
    x = prior.x + K @ innov
    I_KH = np.eye(N_STATE) - K @ H
    if joseph:
        P = I_KH @ prior.P @ I_KH.T + K @ R @ K.T
    else:
        P = I_KH @ prior.P
    report.gain[idx] = K.T
    report.innovation[idx] = innov
    report.condition = float(cond)
    return FusedState(x, _symmetrize(P), prior.k, prior.t), report


def ekf_step(state: FusedState, z: FusedMeasurement, noise: NoiseConfig, model: MeasurementModel,
             joseph: bool = True) -> tuple[FusedState, GainReport]:
    """One predict-update cycle."""
    return update(predict(state, noise), z, model, noise, joseph)


@dataclass
class GateResult:
    measurement: FusedMeasurement
    radar_accepted: int = 0
    radar_rejected: int = 0
    camera_accepted: int = 0
    camera_rejected: int = 0


def gate(prediction: FusedState, radar_meas, camera_dets, model: MeasurementModel,
         gate_radius: float, pixel_gate: float, merge_radar: bool = False) -> GateResult:
    """Keep the candidate nearest the prediction for each sensor, within its gate.

    A radar candidate is placed at its measured range along the predicted
    bearing; it survives when that point lies within ``gate_radius`` metres
    of the predicted position. A camera candidate survives when its lateral
    pixel is within ``pixel_gate`` of the predicted pixel.

    With ``merge_radar`` every surviving radar cluster is treated as part of
    one extended target and the power-weighted mean of their range and
    Doppler is reported instead of the nearest cluster.
    """
    z = FusedMeasurement(k=prediction.k)
    res = GateResult(z)
    r_pred = prediction.range
    best = None
    kept = []
    for m in radar_meas:
        dist = abs(m.r - r_pred)
        if dist < gate_radius:
            res.radar_accepted += 1
            kept.append(m)
            if best is None or dist < best[0]:
                best = (dist, m)
        else:
            res.radar_rejected += 1
    if merge_radar and kept:
        w = np.array([max(m.power, 0.0) for m in kept])
        w = w / w.sum() if w.sum() > 0 else np.full(len(kept), 1 / len(kept))
        z.r = float(w @ [m.r for m in kept])
        z.f_d = float(w @ [m.f_d for m in kept])
    elif best is not None:
        z.r, z.f_d = best[1].r, best[1].f_d

    p_pred = model.pixel(prediction.x)
    best = None
    for d in camera_dets:
        dist = abs(d.lateral - p_pred)
        if dist < pixel_gate:
            res.camera_accepted += 1
            if best is None or dist < best[0]:
                best = (dist, d)
        else:
            res.camera_rejected += 1
    if best is not None:
        z.pixel = best[1].lateral
    return res


def initial_state(r: float, pixel: float, model: MeasurementModel, k: int = 0, t: float = 0.0,
                  omega0: float = 1e-3, P0=(100.0, 100.0, 100.0, 100.0, 1.0),
                  f_d: float | None = None) -> FusedState | None:
    """Position from radar range and the camera ray through ``pixel``.

    The velocity is radial, ``f_d / doppler_scale`` along the line of sight,
    or zero when ``f_d`` is not given. Returns ``None`` when the ray does not
    meet the range circle in front of the camera.
    """
    P = model.P
    zr = model.reference_height
    rp = model.radar_position
    # (P1 - p P0) . [X, Y, z, 1] = 0 is the vertical plane through the camera ray
    row = P[1] - pixel * P[0]
    a, b = row[0], row[1]
    c0 = row[2] * zr + row[3] + a * rp[0] + b * rp[1]
    # a x + b y + c0 = 0 in radar-relative coordinates, with x^2 + y^2 = r^2
    n2 = a * a + b * b
    if n2 == 0:
        return None
    foot = -c0 / n2 * np.array([a, b])
    disc = r * r - foot @ foot
    if disc < 0:
        return None
    along = np.array([-b, a]) / np.sqrt(n2)
    best = None
    for sgn in (1.0, -1.0):
        p = foot + sgn * np.sqrt(disc) * along
        depth = P[0] @ model.world_point(np.r_[p, 0, 0, 0])
        if depth > 0 and (best is None or p[0] > best[0]):
            best = p
    if best is None:
        return None
    v = np.zeros(2) if f_d is None or r == 0 else f_d / model.doppler_scale * best / r
    x = np.array([best[0], best[1], v[0], v[1], omega0])
    return FusedState(x, np.diag(np.asarray(P0, dtype=float)), k, t)


@dataclass
class TrackRow:
    k: int
    t: float
    initialized: bool
    x: np.ndarray
    P_diag: np.ndarray
    gain: np.ndarray
    radar_accepted: int = 0
    radar_rejected: int = 0
    camera_accepted: int = 0
    camera_rejected: int = 0


class Tracker:
    """Sequential fusion spine: predict, gate, update, once per frame.

    A track starts only after two consecutive frames give consistent
    candidate positions, each built from the strongest radar cluster with at
    least ``min_cluster`` detections and a camera detection. The track is
    dropped, and initialisation starts over, when either sensor keeps
    reporting but its gate rejects everything for ``max_misses`` frames in a
    row. Uninitialised frames yield NaN rows. An ``initial`` state skips the
    two-frame confirmation (used when one sensor is switched off and the
    track could never start on its own).
    """

    def __init__(self, model: MeasurementModel, noise: NoiseConfig, gate_radius: float | None = None,
                 pixel_gate: float | None = None, min_gate_radius: float = 3.0,
                 min_pixel_gate: float = 15.0, n_sigma: float = 3.0, joseph: bool = True,
                 merge_radar: bool = False, min_cluster: int = 3, confirm_radius: float = 3.0,
                 max_misses: int = 5, max_speed: float = 15.0,
                 initial: FusedState | None = None):
        self.model = model
        self.noise = noise
        self.gate_radius = gate_radius
        self.pixel_gate = pixel_gate
        self.min_gate_radius = min_gate_radius
        self.min_pixel_gate = min_pixel_gate
        self.n_sigma = n_sigma
        self.joseph = joseph
        self.merge_radar = merge_radar
        self.min_cluster = min_cluster
        self.confirm_radius = confirm_radius
        self.max_misses = max_misses
        self.max_speed = max_speed
        self.state: FusedState | None = initial.copy() if initial is not None else None
        self._pending: list = []
        self._misses = [0, 0]

    def _candidates(self, k, t, radar_meas, camera_dets):
        strong = [m for m in radar_meas if m.n_detections >= self.min_cluster]
        if not strong or not camera_dets:
            return []
        best = max(strong, key=lambda m: m.power)
        out = []
        for d in camera_dets:
            s = initial_state(best.r, d.lateral, self.model, k, t)
            if s is not None:
                out.append(s)
        return out

    def _try_initialise(self, k, t, radar_meas, camera_dets):
        cands = self._candidates(k, t, radar_meas, camera_dets)
        chosen = None
        for c in cands:
            for p in self._pending:
                # the target may have moved up to max_speed * dt since then
                reach = self.confirm_radius + self.max_speed * (t - p.t)
                if np.hypot(*(c.x[:2] - p.x[:2])) <= reach:
                    chosen = c
                    break
            if chosen is not None:
                break
        self._pending = cands
        if chosen is not None:
            self._pending = []
            self._misses = [0, 0]
        return chosen

    def reset(self) -> None:
        self.state = None
        self._pending = []
        self._misses = [0, 0]

    def _gates(self, pred: FusedState):
        if self.gate_radius is not None:
            radius = self.gate_radius
        else:
            pos_var = np.linalg.eigvalsh(pred.P[:2, :2]).max()
            radius = max(self.min_gate_radius,
                         self.n_sigma * np.sqrt(pos_var + self.noise.sigma_range**2))
        if self.pixel_gate is not None:
            pix = self.pixel_gate
        else:
            Hp = self.model.H(pred.x)[2]
            s = Hp @ pred.P @ Hp + self.noise.sigma_pixel**2
            pix = max(self.min_pixel_gate, self.n_sigma * np.sqrt(s))
        return radius, pix

    def step(self, k: int, t: float, radar_meas, camera_dets) -> TrackRow:
        radar_meas = [m for m in radar_meas if m.n_detections >= self.min_cluster]
        if self.state is None:
            init = self._try_initialise(k, t, radar_meas, camera_dets)
            if init is None:
                return TrackRow(k, t, False, np.full(N_STATE, np.nan), np.full(N_STATE, np.nan),
                                np.zeros((3, N_STATE)), 0, len(radar_meas), 0, len(camera_dets))
            self.state = init
            return TrackRow(k, t, True, init.x.copy(), np.diag(init.P).copy(),
                            np.zeros((3, N_STATE)), 1, len(radar_meas) - 1, 1, len(camera_dets) - 1)

        pred = predict(self.state, self.noise, t - self.state.t)
        pred.k = k
        radius, pix = self._gates(pred)
        g = gate(pred, radar_meas, camera_dets, self.model, radius, pix, self.merge_radar)
        g.measurement.k = k
        post, report = update(pred, g.measurement, self.model, self.noise, self.joseph)
        self.state = post
        row = TrackRow(k, t, True, post.x.copy(), np.diag(post.P).copy(), report.gain,
                       g.radar_accepted, g.radar_rejected, g.camera_accepted, g.camera_rejected)
        for i, (acc, rej) in enumerate(((g.radar_accepted, g.radar_rejected),
                                        (g.camera_accepted, g.camera_rejected))):
            if acc:
                self._misses[i] = 0
            elif rej:
                self._misses[i] += 1
        if max(self._misses) >= self.max_misses:
            self.reset()
        return row

    def compensation(self, t: float):
        """(r0, vr, omega) of the current track propagated to time ``t``."""
        if self.state is None:
            return None
        s = predict(self.state, self.noise, t - self.state.t) if t != self.state.t else self.state
        return s.range, s.radial_velocity, s.omega
