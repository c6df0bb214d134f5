"""Receive-side processing: motion compensation, dechirp, imaging, detection.

Image arrays are indexed ``[doppler_or_crossrange, range]`` and both axes are
returned in ascending order. Doppler is positive for receding scatterers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq
from scipy.signal import get_window
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .constants import SPEED_OF_LIGHT
from .radar_synth import RadarConfig, RadarCube

__all__ = [
    "CfarConfigError",
    "Detections",
    "ImageGateError",
    "Interferogram",
    "IsarImage",
    "RadarMeasurement",
    "StretchConfig",
    "chirp_wavelength",
    "cluster_detections",
    "cluster_to_measurement",
    "compensate_and_stretch",
    "form_image",
    "image_gate",
    "interferogram",
    "measurements_from_clusters",
    "motion_compensate",
    "os_cfar_detect",
    "os_cfar_scale",
    "stretch_process",
]

MIN_TURN_RATE = 0.01


class ImageGateError(ValueError):
    """Crossrange mapping requested with a turn rate below the imaging gate."""


class CfarConfigError(ValueError):
    """CFAR window does not fit the image."""


@dataclass(frozen=True)
class StretchConfig:
    """Dechirp reference and DFT sizes.

    ``reference_duration`` of 0 uses one PRI; DFT sizes of 0 use the data
    sizes.
    """

    reference_range: float
    reference_duration: float = 0.0
    n_fft_fast: int = 0
    n_fft_slow: int = 0

    @classmethod
    def centered(cls, config: RadarConfig, **kw) -> "StretchConfig":
        """Reference range placing the range window at [0, window extent)."""
        half_window = config.sample_rate * SPEED_OF_LIGHT / (4 * config.chirp_rate)
        return cls(reference_range=half_window, **kw)

    def validate(self, config: RadarConfig):
        if self.reference_duration and self.reference_duration < config.pri:
            raise ValueError("reference duration must cover the pulse")
        if self.n_fft_fast and self.n_fft_fast < config.n_fast:
            raise ValueError("fast-time DFT shorter than the data")
        if self.n_fft_slow and self.n_fft_slow < config.n_pulses:
            raise ValueError("slow-time DFT shorter than the data")


@dataclass
class IsarImage:
    """Complex range-Doppler or range-crossrange image of one channel."""

    data: np.ndarray
    range_axis: np.ndarray
    doppler_axis: np.ndarray
    crossrange_axis: np.ndarray | None = None
    k: int = 0
    channel: int = 0
    omega: float | None = None
    wavelength: float = SPEED_OF_LIGHT / 77e9

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.data) ** 2

    @property
    def range_step(self) -> float:
        return float(self.range_axis[1] - self.range_axis[0])

    @property
    def doppler_step(self) -> float:
        return float(self.doppler_axis[1] - self.doppler_axis[0])


@dataclass
class Interferogram:
    theta: np.ndarray
    mask: np.ndarray
    n_out_of_range: int = 0


@dataclass
class Detections:
    """CFAR detections as (doppler index, range index, power) triples."""

    doppler_index: np.ndarray
    range_index: np.ndarray
    power: np.ndarray

    def __len__(self):
        return len(self.power)

    def subset(self, idx) -> "Detections":
        return Detections(self.doppler_index[idx], self.range_index[idx], self.power[idx])


@dataclass
class RadarMeasurement:
    r: float
    f_d: float
    elevation: float | None
    n_detections: int
    k: int = 0
    power: float = 0.0


def motion_compensate(cube: RadarCube, r0: float, vr: float) -> RadarCube:
    """Remove the phase history of a centroid moving as ``r0 + vr t``.

    Every pulse is multiplied by ``exp(+j 4 pi (r0 + vr t) / lambda)``.
    """
    cfg = cube.config
    t = cfg.slow_time()
    phase = np.exp(1j * 4 * np.pi * (r0 + vr * t) / cfg.wavelength)
    return cube.replace(cube.data * phase[None, :, None], compensation=(float(r0), float(vr)))


def _reference(cfg: RadarConfig, scfg: StretchConfig, delay):
    tau = cfg.fast_time()
    duration = scfg.reference_duration or cfg.pri
    gate = (tau >= 0) & (tau < duration)
    delay = np.atleast_1d(delay)
    ref = np.exp(1j * np.pi * cfg.chirp_rate * (tau[None, :] - delay[:, None]) ** 2)
    return ref * gate[None, :]


def stretch_process(cube: RadarCube, cfg: StretchConfig) -> RadarCube:
    """Mix every pulse with the conjugate of a chirp delayed to the reference range.

    The residual video phase is left in place.
    """
    rc = cube.config
    cfg.validate(rc)
    ref = _reference(rc, cfg, 2 * cfg.reference_range / SPEED_OF_LIGHT)[0]
    return cube.replace(cube.data * np.conj(ref)[None, None, :],
                        reference_range=cfg.reference_range)


def compensate_and_stretch(cube: RadarCube, cfg: StretchConfig, r0: float, vr: float,
                           align_range: bool = True) -> RadarCube:
    """Motion compensation and dechirp in one pass over the cube.

    With ``align_range`` the reference delay of each pulse follows the
    centroid's range walk ``vr t``, so a scatterer moving with the centroid
    stays in one range bin over the CPI. The slow-time phase this introduces
    through the reference's own quadratic term is removed, so the output
    range axis is that of ``stretch_process`` at the start of the CPI.
    """
    rc = cube.config
    cfg.validate(rc)
    c = SPEED_OF_LIGHT
    t = rc.slow_time()
    walk = vr * t if align_range else np.zeros_like(t)
    delay = 2 * (cfg.reference_range + walk) / c
    ref = np.conj(_reference(rc, cfg, delay))
    tau0 = 2 * cfg.reference_range / c
    phase = np.exp(1j * (4 * np.pi * (r0 + vr * t) / rc.wavelength
                         + np.pi * rc.chirp_rate * (delay**2 - tau0**2)))
    ref *= phase[:, None]
    return cube.replace(cube.data * ref[None, :, :], reference_range=cfg.reference_range,
                        compensation=(float(r0), float(vr)))


def image_gate(omega: float | None, threshold: float = MIN_TURN_RATE) -> bool:
    """True when the turn rate is large enough for a useful crossrange cell."""
    return omega is not None and np.isfinite(omega) and abs(omega) >= threshold


def form_image(cube: RadarCube, omega: float | None = None, channel: int = 0,
               n_fft: tuple[int, int] | None = None, gate: float = MIN_TURN_RATE,
               window: str | None = None) -> IsarImage:
    """2-D DFT of a dechirped cube into a range-Doppler/crossrange image.

    Amplitudes carry the sample spacings, so a unit scatterer peaks at
    ``T_PRI * T_CPI`` times the coherent gain of ``window`` (any name
    accepted by ``scipy.signal.get_window``; 0.25 for ``"hann"``). Passing
    ``omega`` maps Doppler to crossrange through ``rho = f_D lambda / (2 omega)``.
    """
    if not cube.stretched:
        raise ValueError("cube must be stretch-processed before imaging")
    if omega is not None and not image_gate(omega, gate):
        raise ImageGateError(f"turn rate {omega!r} rad/s is below the {gate} rad/s gate")
    cfg = cube.config
    n_slow, n_fast = n_fft or (cfg.n_pulses, cfg.n_fast)
    if n_slow < cfg.n_pulses or n_fast < cfg.n_fast:
        raise ValueError("DFT sizes must not truncate the data")
    data = cube.data[channel]
    if window is not None:
        taper = np.outer(get_window(window, cfg.n_pulses), get_window(window, cfg.n_fast))
        data = data * taper
    spec = np.fft.fft2(data, s=(n_slow, n_fast))
    spec *= cfg.pri / cfg.sample_rate

    doppler = -np.fft.fftfreq(n_slow, d=cfg.pri)
    beat = np.fft.fftfreq(n_fast, d=1 / cfg.sample_rate)
    rng = cube.reference_range - beat * SPEED_OF_LIGHT / (2 * cfg.chirp_rate)
    d_order = np.argsort(doppler, kind="stable")
    r_order = np.argsort(rng, kind="stable")
    data = spec[d_order][:, r_order]
    doppler, rng = doppler[d_order], rng[r_order]
    cross = None if omega is None else doppler * cfg.wavelength / (2 * omega)
    return IsarImage(data, rng, doppler, cross, cube.k, channel, omega, cfg.wavelength)


def chirp_wavelength(config: RadarConfig, ranges) -> np.ndarray:
    """Wavelength at the mean instantaneous frequency of a dechirped echo.

    An echo from range ``r`` is sampled while the chirp sweeps from
    ``f_c`` to ``f_c + beta T``, so delay differences the reference does not
    follow (the receiver baseline, uncompensated range walk) turn into phase
    at ``f_c + beta (T/2 - 2 r / c)``, not at the carrier.
    """
    r = np.asarray(ranges, dtype=float)
    f = config.carrier_frequency + config.chirp_rate * (config.pri / 2 - 2 * r / SPEED_OF_LIGHT)
    return SPEED_OF_LIGHT / f


def interferogram(img1: IsarImage, img2: IsarImage, d: float, gate_db: float = -30.0,
                  wavelength=None) -> Interferogram:
    """Per-bin elevation from the phase difference of two receiver images.

    Bins weaker than ``gate_db`` below either image's peak are masked, as are
    bins whose arcsine argument leaves [-1, 1] (tallied in ``n_out_of_range``).
    ``wavelength`` (scalar, or one value per range column, see
    :func:`chirp_wavelength`) defaults to the image's carrier wavelength.
    """
    if img1.data.shape != img2.data.shape:
        raise ValueError("images differ in shape")
    lam = img1.wavelength if wavelength is None else np.asarray(wavelength, dtype=float)
    dphi = np.angle(img1.data * np.conj(img2.data))
    arg = lam * dphi / (2 * np.pi * d)
    a1, a2 = np.abs(img1.data), np.abs(img2.data)
    g = 10 ** (gate_db / 20)
    strong = (a1 >= g * a1.max()) & (a2 >= g * a2.max()) & (a1 > 0) & (a2 > 0)
    inside = np.abs(arg) <= 1.0
    mask = strong & inside
    theta = np.zeros_like(arg)
    theta[mask] = np.arcsin(arg[mask])
    return Interferogram(theta, mask, int(np.count_nonzero(strong & ~inside)))


def _footprint(train, guard, stride=1):
    """Boolean training mask centred on the cell under test.

    With ``stride`` > 1 (range-only windows) the training cells sit at range
    offsets ``guard + 1 + i * stride``; skipping cells keeps them independent
    when a taper has correlated neighbouring bins.
    """
    td, tr = (int(v) for v in train)
    gd, gr = (int(v) for v in guard)
    stride = int(stride)
    if stride < 1:
        raise CfarConfigError("stride must be at least 1")
    if td == 0:
        gd = 0
    if tr == 0:
        gr = 0
    if stride > 1:
        if td != 0:
            raise CfarConfigError("a training stride needs a range-only window")
        offsets = gr + 1 + stride * np.arange(tr)
        h = int(offsets[-1]) if tr else 0
        fp = np.zeros((1, 2 * h + 1), bool)
        fp[0, h + offsets] = True
        fp[0, h - offsets] = True
        return fp
    hd, hr = td + gd, tr + gr
    fp = np.ones((2 * hd + 1, 2 * hr + 1), bool)
    fp[hd - gd:hd + gd + 1, hr - gr:hr + gr + 1] = False
    return fp


def os_cfar_scale(n_train: int, rank: int, pfa: float) -> float:
    """Threshold multiplier for OS-CFAR on exponentially distributed power.

    Solves ``pfa = prod_{i<rank} (N - i) / (N - i + alpha)`` for alpha, with
    ``rank`` the 1-based position of the order statistic in ascending order.
    """
    if not (1 <= rank <= n_train):
        raise CfarConfigError("rank must lie in [1, n_train]")
    i = np.arange(rank)

    def f(log_alpha):
        a = np.exp(log_alpha)
        return np.sum(np.log(n_train - i) - np.log(n_train - i + a)) - np.log(pfa)

    return float(np.exp(brentq(f, -30.0, 30.0, xtol=1e-14)))


def os_cfar_detect(img, pfa: float, train=(0, 12), guard=(0, 2), rank: int | None = None,
                   stride: int = 1) -> Detections:
    """Ordered-statistic CFAR over a power image with wrap-around edges.

    ``train`` and ``guard`` give one-sided cell counts along (doppler, range).
    A cell is a detection when its power exceeds ``alpha`` times the
    ``rank``-th smallest training power (default: three quarters of the window).
    ``alpha`` assumes independent exponential training cells; for tapered
    images use a range ``stride`` of 2 or more (see :func:`_footprint`).
    """
    power = img.power if isinstance(img, IsarImage) else np.asarray(img, dtype=float)
    fp = _footprint(train, guard, stride)
    n_train = int(fp.sum())
    if n_train == 0:
        raise CfarConfigError("CFAR window has no training cells")
    if fp.shape[0] > power.shape[0] or fp.shape[1] > power.shape[1]:
        raise CfarConfigError(f"CFAR window {fp.shape} larger than image {power.shape}")
    rank = rank or max(1, int(round(0.75 * n_train)))
    alpha = os_cfar_scale(n_train, rank, pfa)

    tr = int(train[1])
    if fp.shape[0] == 1 and rank > tr:
        d_idx, r_idx = _os_cfar_range_only(power, fp[0], tr, rank, alpha)
    else:
        stat = ndimage.rank_filter(power, rank - 1, footprint=fp, mode="wrap")
        d_idx, r_idx = np.nonzero(power > alpha * stat)
    return Detections(d_idx, r_idx, power[d_idx, r_idx])


def _os_cfar_range_only(power, fp_row, train, rank, alpha):
    """Range-window OS-CFAR with a cheap screening bound.

    At least ``rank - train`` cells of each one-sided training block lie at
    or below the window's ``rank``-th order statistic, so that block
    statistic bounds it from below. Only cells clearing the bound get the
    exact window statistic.
    """
    q = rank - train
    h = len(fp_row) // 2
    bound = None
    for side in (slice(0, h), slice(h + 1, None)):
        one = np.zeros_like(fp_row)
        one[side] = fp_row[side]
        stat = ndimage.rank_filter(power, q - 1, footprint=one[None, :], mode="wrap")
        bound = stat if bound is None else np.maximum(bound, stat)
    d_idx, r_idx = np.nonzero(power > alpha * bound)
    if len(d_idx) == 0:
        return d_idx, r_idx
    n = power.shape[1]
    cols = (r_idx[:, None] + np.arange(-h, h + 1)[fp_row][None, :]) % n
    win = power[d_idx[:, None], cols]
    stat = np.partition(win, rank - 1, axis=1)[:, rank - 1]
    keep = power[d_idx, r_idx] > alpha * stat
    return d_idx[keep], r_idx[keep]


def cluster_detections(dets: Detections, n_doppler: int, max_gap: int = 2) -> list[np.ndarray]:
    """Single-linkage clusters of detections, largest first.

    Two detections link when both bin offsets are at most ``max_gap``
    (Chebyshev distance); Doppler wraps around.
    """
    n = len(dets)
    if n == 0:
        return []
    pts = np.column_stack([dets.doppler_index, dets.range_index]).astype(float)
    span = pts[:, 1].max() + 2 * max_gap + 2
    tree = cKDTree(pts, boxsize=[n_doppler, span])
    pairs = tree.query_pairs(max_gap + 0.5, p=np.inf, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    groups = [np.nonzero(labels == lab)[0] for lab in np.unique(labels)]
    groups.sort(key=lambda g: (-len(g), -dets.power[g].sum()))
    return groups


def _cluster_measurement(dets: Detections, members, img: IsarImage, ifg: Interferogram | None):
    w = dets.power[members]
    d_idx = dets.doppler_index[members]
    r_idx = dets.range_index[members]
    n_d = len(img.doppler_axis)
    peak = d_idx[np.argmax(w)]
    offset = (d_idx - peak + n_d // 2) % n_d - n_d // 2
    f_d = img.doppler_axis[peak] + np.sum(w * offset) / w.sum() * img.doppler_step
    span = n_d * img.doppler_step
    f_d = (f_d - img.doppler_axis[0]) % span + img.doppler_axis[0]
    r = float(np.sum(w * img.range_axis[r_idx]) / w.sum())
    elevation = None
    if ifg is not None:
        ok = ifg.mask[d_idx, r_idx]
        if ok.any():
            elevation = float(np.sum(w[ok] * ifg.theta[d_idx[ok], r_idx[ok]]) / w[ok].sum())
    return RadarMeasurement(r, float(f_d), elevation, len(members), img.k, float(w.sum()))


def measurements_from_clusters(dets: Detections, img: IsarImage, ifg: Interferogram | None = None,
                               max_gap: int = 2) -> list[RadarMeasurement]:
    """One centroid measurement per cluster, largest cluster first."""
    groups = cluster_detections(dets, len(img.doppler_axis), max_gap)
    return [_cluster_measurement(dets, g, img, ifg) for g in groups]


def cluster_to_measurement(dets: Detections, img: IsarImage, ifg: Interferogram | None = None,
                           max_gap: int = 2) -> RadarMeasurement | None:
    """Power-weighted centroid of the largest detection cluster, if any."""
    groups = cluster_detections(dets, len(img.doppler_axis), max_gap)
    if not groups:
        return None
    return _cluster_measurement(dets, groups[0], img, ifg)
