"""Pinhole camera projection and a statistical object detector.

The camera frame has x along the optical axis, y lateral and z vertical.
Homogeneous pixels are ``[w, w p_u, w p_v]`` with ``w`` the depth, so

    p_u = f_u y / x + p_u0     (lateral)
    p_v = f_v z / x + p_v0     (vertical)

with ``f_u``, ``f_v`` the focal lengths expressed in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BehindCameraError",
    "CameraDetection",
    "CameraExtrinsics",
    "CameraIntrinsics",
    "detect",
    "extrinsics_from_pose",
    "project",
    "projection_matrix",
]


class BehindCameraError(ValueError):
    """The point lies on or behind the image plane."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths in pixels, principal point and image extent.

    ``image_size`` is (lateral extent along p_u, vertical extent along p_v).
    """

    focal: tuple = (800.0, 800.0)
    principal_point: tuple = (320.0, 240.0)
    image_size: tuple = (640, 480)

    def __post_init__(self):
        if min(self.focal) <= 0:
            raise ValueError("focal lengths must be positive")
        pu, pv = self.principal_point
        if not (0 <= pu <= self.image_size[0] and 0 <= pv <= self.image_size[1]):
            raise ValueError("principal point outside the image")

    def matrix(self) -> np.ndarray:
        (fu, fv), (pu, pv) = self.focal, self.principal_point
        return np.array([[1.0, 0.0, 0.0, 0.0],
                         [pu, fu, 0.0, 0.0],
                         [pv, 0.0, fv, 0.0]])


@dataclass(frozen=True)
class CameraExtrinsics:
    """Rigid transform taking world points into the camera frame."""

    rotation: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-10) or np.linalg.det(r) <= 0:
            raise ValueError("rotation must be a proper orthonormal matrix")

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = np.asarray(self.rotation, dtype=float)
        m[:3, 3] = np.asarray(self.translation, dtype=float)
        return m


def extrinsics_from_pose(position, yaw: float = 0.0) -> CameraExtrinsics:
    """Extrinsics of a level camera at ``position`` looking along heading ``yaw``."""
    c, s = np.cos(yaw), np.sin(yaw)
    r = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    t = -r @ np.asarray(position, dtype=float)
    return CameraExtrinsics(tuple(map(tuple, r)), tuple(t))


def projection_matrix(intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """3x4 matrix mapping homogeneous world points to homogeneous pixels."""
    return intr.matrix() @ extr.matrix()


def project(P, x_world, image_size=None):
    """Pixel ``(p_u, p_v)`` of a world point.

    Raises :class:`BehindCameraError` when the depth is not positive. With
    ``image_size`` given, also returns whether the pixel falls inside the
    image.
    """
    xw = np.asarray(x_world, dtype=float)
    h = np.asarray(P) @ np.append(xw, 1.0)
    if not np.all(np.isfinite(h)):
        raise ValueError("non-finite point")
    if h[0] <= 0:
        raise BehindCameraError(f"depth {h[0]:.3g} m is not in front of the camera")
    pix = (h[1] / h[0], h[2] / h[0])
    if image_size is None:
        return pix
    inside = 0 <= pix[0] <= image_size[0] and 0 <= pix[1] <= image_size[1]
    return pix, inside


@dataclass(frozen=True)
class CameraDetection:
    """Bounding-box detection; ``is_false_positive`` is simulation truth only."""

    centroid: tuple
    box: tuple                    # (u_min, v_min, u_max, v_max)
    k: int = 0
    is_false_positive: bool = False

    @property
    def lateral(self) -> float:
        return float(self.centroid[0])

    def truncated(self, intrinsics: "CameraIntrinsics", margin: float = 1.0) -> bool:
        """True when the box touches the left or right image border.

        A clipped box's centroid sits inside the visible part of the object,
        not at its projected centre.
        """
        return self.box[0] <= margin or self.box[2] >= intrinsics.image_size[0] - 1 - margin


def _projected_box(P, corners):
    h = (np.asarray(P) @ np.column_stack([corners, np.ones(len(corners))]).T).T
    if np.any(h[:, 0] <= 0):
        return None
    u = h[:, 1] / h[:, 0]
    v = h[:, 2] / h[:, 0]
    return u.min(), v.min(), u.max(), v.max()


def detect(P, corners, k: int, pd: float, fp_rate: float, rng_seed=None,
           intrinsics: CameraIntrinsics = CameraIntrinsics(), min_size: float = 15.0,
           max_range: float = 100.0, camera_position=None) -> list[CameraDetection]:
    """Simulated detector output for one frame.

    The target is detectable when all ``corners`` are in front of the camera,
    closer than ``max_range`` (requires ``camera_position``), and their
    projected bounding box overlaps the image with a clipped extent of at
    least ``min_size`` pixels on both axes. A detectable target is reported
    with probability ``pd`` at the centre of its clipped box. Independently,
    one false positive with a random box appears with probability ``fp_rate``.
    """
    if not (0 <= pd <= 1 and 0 <= fp_rate <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    draw_genuine, draw_fp = rng.random(2)
    width, height = intrinsics.image_size
    out = []

    box = _projected_box(P, np.asarray(corners, dtype=float))
    in_range = True
    if camera_position is not None:
        dist = np.linalg.norm(np.asarray(corners).mean(axis=0) - np.asarray(camera_position))
        in_range = dist <= max_range
    if box is not None and in_range:
        u0, v0 = max(box[0], 0.0), max(box[1], 0.0)
        u1, v1 = min(box[2], width), min(box[3], height)
        if u1 - u0 >= min_size and v1 - v0 >= min_size and draw_genuine < pd:
            out.append(CameraDetection(((u0 + u1) / 2, (v0 + v1) / 2), (u0, v0, u1, v1), k))

    if draw_fp < fp_rate:
        w = rng.uniform(min_size, width / 4)
        h = rng.uniform(min_size, height / 4)
        cu = rng.uniform(w / 2, width - w / 2)
        cv = rng.uniform(h / 2, height - h / 2)
        out.append(CameraDetection((cu, cv), (cu - w / 2, cv - h / 2, cu + w / 2, cv + h / 2),
                                   k, True))
    return out
