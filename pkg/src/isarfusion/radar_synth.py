"""Dual-channel FMCW return synthesis for one coherent processing interval.

Each scatterer contributes a delayed chirp with a first-order range history
``r(t) = r0 + v t`` (stop-and-hop between pulses). The second receiver sits a
baseline ``d`` from the first along z, which adds ``d sin(theta)`` of path for
a scatterer at elevation ``theta``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from .constants import SPEED_OF_LIGHT
from .scene import Scatterers

__all__ = [
    "ClutterField",
    "RadarConfig",
    "RadarCube",
    "RangeAmbiguityError",
    "snr_for_detection",
    "spawn_clutter",
    "synthesize_cpi",
]


class RangeAmbiguityError(ValueError):
    """A scatterer echo would arrive after the end of its own pulse interval."""


@dataclass(frozen=True)
class RadarConfig:
    """FMCW waveform, sampling and sensor statistics.

    The chirp occupies the whole pulse repetition interval, so the swept
    bandwidth is ``chirp_rate * pri``. ``max_range`` is the instrumented
    range (IF filter cutoff); echoes from further away are not recorded.
    """

    carrier_frequency: float = 77e9
    chirp_rate: float = 1.5e9 / (0.1 / 1024)
    pri: float = 0.1 / 1024
    n_pulses: int = 1024
    sample_rate: float = 512 / (0.1 / 1024)
    n_channels: int = 2
    baseline: float = 0.0                # 0 selects half a wavelength
    noise_power: float = 1e-2
    tx_power: float = 1.0
    pd: float = 1.0
    pfa: float = 1e-6
    max_range: float = 40.0
    azimuth_fov: float = np.deg2rad(120.0)
    elevation_fov: float = np.deg2rad(90.0)
    reference_range: float = 10.0        # amplitudes are referred to this range

    def __post_init__(self):
        if self.n_channels not in (1, 2):
            raise ValueError("n_channels must be 1 or 2")
        if self.pri <= 0 or self.n_pulses <= 0 or self.sample_rate <= 0:
            raise ValueError("timing parameters must be positive")
        n = self.sample_rate * self.pri
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError("sample_rate * pri must be an integer sample count")
        if self.baseline < 0:
            raise ValueError("baseline must be positive (0 selects lambda/2)")
        if not (0 <= self.pd <= 1 and 0 < self.pfa < 1):
            raise ValueError("pd must lie in [0, 1] and pfa in (0, 1)")

    @classmethod
    def desk(cls, **kw) -> "RadarConfig":
        """1024 pulses x 512 samples over 0.1 s at 1.5 GHz (0.1 m range bins)."""
        return cls(**kw)

    @classmethod
    def fast_chirp(cls, n_pulses: int = 4000, **kw) -> "RadarConfig":
        """77 GHz, 60 THz/s chirp at 40 kHz PRF (0.1 m resolution)."""
        pri = 1 / 40e3
        return cls(chirp_rate=60e12, pri=pri, n_pulses=n_pulses,
                   sample_rate=512 / pri, **kw)

    @classmethod
    def measurement_table(cls, **kw) -> "RadarConfig":
        """2 GHz over a 400 us chirp with a 0.1 s CPI (250 pulses)."""
        pri = 400e-6
        return cls(chirp_rate=2e9 / pri, pri=pri, n_pulses=250,
                   sample_rate=512 / pri, max_range=100.0, **kw)

    @property
    def n_fast(self) -> int:
        return int(round(self.sample_rate * self.pri))

    @property
    def cpi(self) -> float:
        return self.pri * self.n_pulses

    @property
    def bandwidth(self) -> float:
        return self.chirp_rate * self.pri

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def d(self) -> float:
        return self.baseline if self.baseline > 0 else self.wavelength / 2

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.bandwidth)

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / self.cpi

    @property
    def prf(self) -> float:
        return 1.0 / self.pri

    def crossrange_resolution(self, omega: float) -> float:
        return self.wavelength / (2 * abs(omega) * self.cpi)

    def fast_time(self) -> np.ndarray:
        return np.arange(self.n_fast) / self.sample_rate

    def slow_time(self) -> np.ndarray:
        return np.arange(self.n_pulses) * self.pri

    def header_values(self) -> tuple:
        return tuple(float(v) for v in astuple(self))

    @classmethod
    def from_header_values(cls, values) -> "RadarConfig":
        kw = {}
        for f, v in zip(fields(cls), values):
            kw[f.name] = int(v) if f.type in ("int", int) else float(v)
        return cls(**kw)

    def digest(self) -> bytes:
        """8-byte fingerprint of the configuration."""
        raw = struct.pack(f"<{len(fields(self))}d", *self.header_values())
        return hashlib.sha256(raw).digest()[:8]


@dataclass
class RadarCube:
    """Complex samples ``data[channel, pulse, fast_sample]`` for one CPI.

    ``reference_range`` is set once the cube has been dechirped and
    ``compensation`` records the (r0, vr) used for motion compensation.
    """

    data: np.ndarray
    config: RadarConfig
    k: int = 0
    reference_range: float | None = None
    compensation: tuple | None = None

    def __post_init__(self):
        cfg = self.config
        expected = (cfg.n_channels, cfg.n_pulses, cfg.n_fast)
        if self.data.shape != expected:
            raise ValueError(f"cube shape {self.data.shape} does not match config {expected}")

    @property
    def stretched(self) -> bool:
        return self.reference_range is not None

    def replace(self, data, **kw) -> "RadarCube":
        attrs = dict(config=self.config, k=self.k, reference_range=self.reference_range,
                     compensation=self.compensation)
        attrs.update(kw)
        return RadarCube(data, **attrs)

    def __eq__(self, other):
        return (isinstance(other, RadarCube) and self.config == other.config
                and self.k == other.k and np.array_equal(self.data, other.data))


@dataclass
class ClutterField:
    """Static point clutter (zero radial velocity) inside a box region."""

    position: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    reflectivity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n: int = 0
    p: float = 0.0
    region: tuple = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))

    def __len__(self):
        return len(self.reflectivity)

    def as_scatterers(self) -> Scatterers:
        m = len(self)
        return Scatterers(self.position, self.reflectivity, np.zeros(m), np.ones(m, bool),
                          np.full(m, -1))


def spawn_clutter(n: int, p: float, region, reflectivity: float = 1.0,
                  rng_seed=None) -> ClutterField:
    """Draw a clutter field with a Binomial(n, p) count of uniform points.

    ``region`` is ``((xmin, xmax), (ymin, ymax), (zmin, zmax))`` in world
    coordinates. Call once per CPI with a fresh seed for temporally
    independent clutter.
    """
    lo = np.array([r[0] for r in region], dtype=float)
    hi = np.array([r[1] for r in region], dtype=float)
    if np.any(hi < lo):
        raise ValueError("empty clutter region")
    rng = np.random.default_rng(rng_seed)
    count = int(rng.binomial(n, p)) if n > 0 and p > 0 else 0
    pos = lo + (hi - lo) * rng.random((count, 3))
    refl = np.full(count, float(reflectivity))
    return ClutterField(pos, refl, n, p, tuple(tuple(map(float, r)) for r in region))


def snr_for_detection(pd: float, pfa: float) -> float:
    """Linear SNR giving ``pd`` at ``pfa`` for a fluctuating (Swerling I) echo.

    Uses ``pd = pfa ** (1 / (1 + snr))``.
    """
    if not (0 < pd < 1 and 0 < pfa < pd):
        raise ValueError("need 0 < pfa < pd < 1")
    return float(np.log(pfa) / np.log(pd) - 1.0)


def _geometry(config: RadarConfig, scat: Scatterers, radar_position):
    rel = scat.position - np.asarray(radar_position, dtype=float)
    rng = np.linalg.norm(rel, axis=1)
    horiz = np.hypot(rel[:, 0], rel[:, 1])
    az = np.arctan2(rel[:, 1], rel[:, 0])
    el = np.arctan2(rel[:, 2], horiz)
    return rng, az, el


def _beat_rows(rate_times_delay, fast_time):
    """exp(-j 2 pi rate*delay[m] * tau[n]) via a split of the sample index."""
    n = len(fast_time)
    step = fast_time[1] - fast_time[0] if n > 1 else 0.0
    block = 1
    while block * block < n:
        block *= 2
    if n % block:
        return np.exp(-2j * np.pi * np.outer(rate_times_delay, fast_time))
    coarse = np.exp(-2j * np.pi * rate_times_delay[:, None] * (np.arange(n // block) * block * step))
    fine = np.exp(-2j * np.pi * rate_times_delay[:, None] * (np.arange(block) * step))
    return (coarse[:, :, None] * fine[:, None, :]).reshape(len(rate_times_delay), n)


def synthesize_cpi(config: RadarConfig, scatterers: Scatterers, clutter: ClutterField | None = None,
                   rng_seed=None, radar_position=(0.0, 0.0, 0.0), k: int = 0,
                   noise: bool = True, apply_pd: bool = True) -> RadarCube:
    """Down-converted received signal of every receiver for one CPI.

    Visible scatterers inside the field of view and instrumented range each
    pass an independent Bernoulli(``config.pd``) draw and then add

        a (r_ref / r)^2 rect((tau - tau_b)/T) exp(-j 2 pi f_c tau_b) exp(j pi beta (tau - tau_b)^2)

    with ``tau_b = (2 (r0 + v t) + (i-1) d sin(theta)) / c``. Clutter points
    join as zero-velocity scatterers. Complex white Gaussian noise of power
    ``config.noise_power`` is added per sample when ``noise`` is true.
    """
    rng = np.random.default_rng(rng_seed)
    parts = [scatterers.select(scatterers.visible)]
    if apply_pd and config.pd < 1.0:
        keep = rng.random(len(parts[0])) < config.pd
        parts[0] = parts[0].select(keep)
    if clutter is not None and len(clutter):
        parts.append(clutter.as_scatterers())

    c = SPEED_OF_LIGHT
    tau = config.fast_time()
    t = config.slow_time()
    beta = config.chirp_rate
    fc = config.carrier_frequency
    out = np.zeros((config.n_channels, config.n_pulses, config.n_fast), dtype=complex)
    chirp = np.exp(1j * np.pi * beta * tau**2)

    for part in parts:
        if not len(part):
            continue
        r0, az, el = _geometry(config, part, radar_position)
        far = r0 + np.abs(part.radial_velocity) * config.cpi
        bad = np.nonzero(far >= c * config.pri / 2)[0]
        if len(bad):
            b = int(bad[0])
            raise RangeAmbiguityError(
                f"scatterer {b} at {r0[b]:.1f} m exceeds the unambiguous range "
                f"{c * config.pri / 2:.1f} m")
        seen = ((r0 <= config.max_range) & (np.abs(az) <= config.azimuth_fov / 2)
                & (np.abs(el) <= config.elevation_fov / 2))
        for b in np.nonzero(seen)[0]:
            amp = part.reflectivity[b] * (config.reference_range / r0[b]) ** 2
            if amp == 0.0:
                continue
            base = 2 * (r0[b] + part.radial_velocity[b] * t) / c
            for i in range(config.n_channels):
                delay = base + i * config.d * np.sin(el[b]) / c
                row_phase = np.exp(1j * (np.pi * beta * delay**2 - 2 * np.pi * fc * delay))
                sig = _beat_rows(beta * delay, tau)
                sig *= (amp * row_phase)[:, None]
                sig[tau[None, :] < delay[:, None]] = 0.0
                out[i] += sig
    out *= chirp[None, None, :]

    if noise and config.noise_power > 0:
        scale = np.sqrt(config.noise_power / 2)
        out += scale * (rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
    return RadarCube(out, config, k)
