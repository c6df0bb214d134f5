"""Image quality, focus and tracking-error metrics, plus run tabulation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.interpolate import RegularGridInterpolator

from .isar import MIN_TURN_RATE, IsarImage, image_gate

__all__ = [
    "RunReport",
    "SsimConfig",
    "crossrange_patch",
    "image_entropy",
    "rmse",
    "ssim",
    "tabulate_run",
    "to_db",
]


@dataclass(frozen=True)
class SsimConfig:
    """Window size and stabilising constants ``c1 = (k1 L)^2``, ``c2 = (k2 L)^2``.

    ``dynamic_range`` is ``L``; ``None`` takes the joint value span of the
    two images.
    """

    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float | None = 40.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("SSIM window must be odd and at least 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("stabilising constants must be positive")
        if self.dynamic_range is not None and self.dynamic_range <= 0:
            raise ValueError("dynamic range must be positive")


def to_db(img, floor_db: float = -40.0) -> np.ndarray:
    """Magnitude in dB relative to the peak, clipped at ``floor_db``."""
    mag = np.abs(np.asarray(img))
    peak = mag.max()
    if peak == 0:
        return np.full(mag.shape, float(floor_db))
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / peak)
    return np.maximum(db, floor_db)


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean windowed structural similarity of two real images.

    Local statistics use a uniform ``window`` x ``window`` kernel with
    sample (N-1) normalisation; the mean excludes a border of half a
    window. Pass dB images (see :func:`to_db`) to compare ISAR magnitudes.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    w = cfg.window
    if min(a.shape) < w:
        raise ValueError(f"images smaller than the {w}x{w} window")
    L = cfg.dynamic_range
    if L is None:
        L = max(a.max(), b.max()) - min(a.min(), b.min()) or 1.0
    c1, c2 = (cfg.k1 * L) ** 2, (cfg.k2 * L) ** 2

    n = w**a.ndim
    norm = n / (n - 1)
    mean = lambda x: ndimage.uniform_filter(x, size=w, mode="reflect")
    ma, mb = mean(a), mean(b)
    va = norm * (mean(a * a) - ma * ma)
    vb = norm * (mean(b * b) - mb * mb)
    cov = norm * (mean(a * b) - ma * mb)
    s = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2))
    pad = (w - 1) // 2
    inner = s[tuple(slice(pad, dim - pad) for dim in s.shape)]
    return float(np.clip(inner.mean(), -1.0, 1.0))


def image_entropy(img) -> float:
    """Shannon entropy (nats) of the normalised power distribution."""
    data = img.data if isinstance(img, IsarImage) else img
    mag = np.abs(np.asarray(data))
    if mag.size == 0:
        raise ValueError("empty image")
    peak = mag.max()
    if peak == 0:
        raise ValueError("entropy of an all-zero image is undefined")
    p = (mag / peak) ** 2          # scale first so tiny or huge inputs cannot under/overflow
    p = p[p > 0] / p.sum()
    return float(-np.sum(p * np.log(p)))


def rmse(estimate, truth, axis=0) -> np.ndarray:
    """Root-mean-square error, ignoring rows where the estimate is NaN."""
    e = np.asarray(estimate, dtype=float)
    t = np.asarray(truth, dtype=float)
    if e.shape != t.shape:
        raise ValueError("estimate and truth differ in shape")
    err = (e - t) ** 2
    # an all-NaN column (track never started) gives NaN, not a warning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.sqrt(np.nanmean(err, axis=axis))


def crossrange_patch(img: IsarImage, omega: float, range_center: float, half_range: float = 8.0,
                     half_cross: float = 8.0, step: float = 0.1) -> np.ndarray:
    """Resample an image magnitude onto a fixed (crossrange, range) grid.

    Doppler maps to crossrange through ``rho = f_D lambda / (2 omega)``; the
    grid spans ``+-half_cross`` by ``range_center +- half_range`` at ``step``
    spacing, with zeros outside the image support. Where the image samples
    are finer than ``step`` the magnitude is first box-averaged over one
    output cell, so narrow peaks are not missed by the coarser grid.
    """
    cross = img.doppler_axis * img.wavelength / (2 * omega)
    order = np.argsort(cross)
    mag = np.abs(img.data)[order]
    for axis, coords in enumerate((cross[order], img.range_axis)):
        if len(coords) > 1:
            n = int(round(step / abs(coords[1] - coords[0])))
            if n > 1:
                mag = ndimage.uniform_filter1d(mag, n, axis=axis, mode="nearest")
    interp = RegularGridInterpolator((cross[order], img.range_axis), mag, bounds_error=False,
                                     fill_value=0.0)
    gc = np.arange(-half_cross, half_cross + step / 2, step)
    gr = range_center + np.arange(-half_range, half_range + step / 2, step)
    C, R = np.meshgrid(gc, gr, indexing="ij")
    return interp(np.column_stack([C.ravel(), R.ravel()])).reshape(C.shape)


@dataclass
class RunReport:
    """Per-trajectory summary mirroring the GT/fused image comparison table."""

    trajectory: str
    n_frames: int
    gt_images: int
    fused_images: int
    mean_ssim: float
    n_ssim: int
    rmse_x: float = math.nan
    rmse_y: float = math.nan
    rmse_omega: float = math.nan
    entropy_fused: list = field(default_factory=list)
    entropy_uncompensated: list = field(default_factory=list)

    def __post_init__(self):
        if not (0 <= self.gt_images <= self.n_frames and 0 <= self.fused_images <= self.n_frames):
            raise ValueError("image counts exceed the frame count")
        if not math.isnan(self.mean_ssim) and not -1 <= self.mean_ssim <= 1:
            raise ValueError("SSIM outside [-1, 1]")

    @property
    def ssim_defined(self) -> bool:
        return self.n_ssim > 0


def tabulate_run(trajectory: str, gt_omega, fused_omega, ssim_values, truth=None, estimate=None,
                 entropy_fused=(), entropy_uncompensated=(), gate: float = MIN_TURN_RATE) -> RunReport:
    """Count gated frames under ground-truth and fused turn rates and average SSIM.

    ``fused_omega`` is NaN for frames without a track. ``ssim_values`` holds
    one value per frame, NaN where either image is missing; the mean runs
    over the finite entries. ``truth``/``estimate`` are (K, 5) state arrays
    used for the x, y and omega RMSE.
    """
    gt_omega = np.asarray(gt_omega, dtype=float)
    fused_omega = np.asarray(fused_omega, dtype=float)
    gt_n = sum(image_gate(w, gate) for w in gt_omega)
    fu_n = sum(image_gate(w, gate) for w in fused_omega)
    s = np.asarray(ssim_values, dtype=float)
    finite = s[np.isfinite(s)]
    mean = float(finite.mean()) if len(finite) else math.nan
    rep = RunReport(trajectory, len(gt_omega), int(gt_n), int(fu_n), mean, len(finite),
                    entropy_fused=list(entropy_fused),
                    entropy_uncompensated=list(entropy_uncompensated))
    if truth is not None and estimate is not None:
        est = np.asarray(estimate, dtype=float)
        if np.isfinite(est[:, 0]).any():
            r = rmse(est[:, [0, 1, 4]], np.asarray(truth, dtype=float)[:, [0, 1, 4]])
            rep.rmse_x, rep.rmse_y, rep.rmse_omega = (float(v) for v in r)
    return rep
