"""Scenario configuration and its plain-text ``dotted.key = json`` format."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraIntrinsics, extrinsics_from_pose, projection_matrix
from .fusion import NoiseConfig
from .metrics import SsimConfig
from .radar_synth import RadarConfig
from .scene import EgoSensorLayout, TargetModel, TrajectorySpec

__all__ = [
    "CONFIG_VERSION",
    "CameraConfig",
    "ClutterConfig",
    "ConfigError",
    "GateConfig",
    "ImagingConfig",
    "ScenarioConfig",
    "TrajectoryConfig",
    "dumps",
    "load",
    "loads",
    "save",
]

CONFIG_VERSION = 1
# about 70 dB peak SNR for the default target at 10-30 m
DEFAULT_NOISE_POWER = 1e4


class ConfigError(ValueError):
    """Malformed or incompatible configuration text."""


@dataclass(frozen=True)
class TrajectoryConfig:
    """Canonical manoeuvre name, or ``"Custom"`` with explicit segments."""

    kind: str = "SSUT"
    speed: float = 6.0
    duration: float = 6.0
    start_position: tuple = (20.0, 39.5, 0.0)
    start_heading: float = 0.0
    segments: tuple = ()

    def build(self) -> TrajectorySpec:
        if self.kind.upper() == "CUSTOM":
            return TrajectorySpec.custom(self.start_position, self.start_heading, self.segments,
                                         self.speed)
        return TrajectorySpec.canonical(self.kind, self.speed, self.duration)


@dataclass(frozen=True)
class CameraConfig:
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    yaw: float = 0.0
    pd: float = 0.9
    fp_rate: float = 0.1
    min_box: float = 15.0
    max_range: float = 100.0
    drop_truncated: bool = True


@dataclass(frozen=True)
class ClutterConfig:
    """Per-CPI Binomial(n, p) static clutter inside ``region``."""

    n: int = 0
    p: float = 0.0
    reflectivity: float = 1.0
    region: tuple = ((14.0, 60.0), (18.0, 64.0), (0.0, 0.5))


@dataclass(frozen=True)
class GateConfig:
    """``None`` radii select the covariance-scaled defaults."""

    radius: float | None = None
    pixel: float | None = None
    min_radius: float = 3.0
    min_pixel: float = 15.0
    n_sigma: float = 3.0
    merge_radar: bool = True
    min_cluster: int = 3
    confirm_radius: float = 3.0
    max_misses: int = 5


@dataclass(frozen=True)
class ImagingConfig:
    omega_gate: float = 0.01
    window: str | None = "hann"
    cfar_train: tuple = (0, 12)
    cfar_guard: tuple = (0, 2)
    cfar_stride: int = 3
    cluster_gap: int = 2
    patch_half_range: float = 8.0
    patch_half_cross: float = 8.0
    patch_step: float = 0.1
    db_floor: float = -40.0
    ssim: SsimConfig = SsimConfig()
    interferogram_gate_db: float = -30.0


@dataclass(frozen=True)
class ScenarioConfig:
    trajectory: TrajectoryConfig = TrajectoryConfig()
    target: TargetModel = TargetModel()
    layout: EgoSensorLayout = EgoSensorLayout()
    radar: RadarConfig = RadarConfig.desk(pd=0.9, pfa=1e-6, noise_power=DEFAULT_NOISE_POWER)
    camera: CameraConfig = CameraConfig()
    noise: NoiseConfig = NoiseConfig(sigma_a=1.0, sigma_alpha=4.0, sigma_range=1.5,
                                     sigma_doppler=400.0, sigma_pixel=2.0)
    clutter: ClutterConfig = ClutterConfig()
    gate: GateConfig = GateConfig()
    imaging: ImagingConfig = ImagingConfig()
    reference_height: float = 0.7
    frames: int = 60
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        if self.frames <= 0:
            raise ValueError("frames must be positive")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")
        if abs(self.noise.T - self.radar.cpi) > 1e-12:
            raise ValueError(f"filter update interval {self.noise.T} s differs from the CPI "
                             f"{self.radar.cpi} s")

    @classmethod
    def for_trajectory(cls, kind: str, **kw) -> "ScenarioConfig":
        return cls(trajectory=TrajectoryConfig(kind=kind), **kw)

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    def projection(self) -> np.ndarray:
        extr = extrinsics_from_pose(self.layout.camera_position, self.camera.yaw)
        return projection_matrix(self.camera.intrinsics, extr)


def _flatten(obj, prefix=""):
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if dataclasses.is_dataclass(value):
            yield from _flatten(value, key + ".")
        else:
            yield key, value


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def dumps(cfg: ScenarioConfig) -> str:
    lines = [f"version = {CONFIG_VERSION}"]
    for key, value in _flatten(cfg):
        lines.append(f"{key} = {json.dumps(_jsonable(value))}")
    return "\n".join(lines) + "\n"


def _as_tuple(v):
    return tuple(_as_tuple(x) for x in v) if isinstance(v, list) else v


def _build(template, values: dict, prefix: str):
    kw = {}
    for f in dataclasses.fields(template):
        key = f"{prefix}{f.name}"
        current = getattr(template, f.name)
        if dataclasses.is_dataclass(current):
            kw[f.name] = _build(current, values, key + ".")
        elif key in values:
            v = _as_tuple(values.pop(key))
            if isinstance(current, bool) or isinstance(v, bool):
                pass
            elif isinstance(current, float) and isinstance(v, int):
                v = float(v)
            kw[f.name] = v
    try:
        return dataclasses.replace(template, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section {prefix.rstrip('.') or '<root>'}: {exc}") from exc


def loads(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse the dotted-key format; unspecified keys keep ``base`` values."""
    values = {}
    version = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, _, val = (s.strip() for s in line.partition("="))
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {n}: bad value for {key}: {exc.msg}") from exc
        if key == "version":
            version = parsed
            continue
        values[key] = parsed
    if version is None:
        raise ConfigError("missing version line")
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version} (reader knows {CONFIG_VERSION})")
    cfg = _build(base or ScenarioConfig(), values, "")
    if values:
        raise ConfigError(f"unknown keys: {', '.join(sorted(values))}")
    return cfg


def save(cfg: ScenarioConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))


def load(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), base)
