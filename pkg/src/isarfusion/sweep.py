"""Detection-statistics sweeps: tracking error against camera and radar quality.

Each grid point runs :func:`~isarfusion.pipeline.track_loop` (sensors and
fusion, no imaging) over several seeds and reports seed-averaged x, y and
position RMSE.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .metrics import rmse
from .pipeline import track_loop

__all__ = [
    "CAMERA_PD_GRID",
    "RADAR_GRID",
    "SweepPoint",
    "camera_sweep",
    "radar_sweep",
    "sweep_table",
]

CAMERA_PD_GRID = (0.5, 0.75, 0.99)
RADAR_GRID = ((0.5, 1e-5), (0.75, 1e-6), (0.9, 1e-7))

# "perfect" radar for the camera sweep and "good" camera for the radar sweep
GOOD_RADAR = (1.0, 1e-7)
GOOD_CAMERA = (0.99, 0.1)


@dataclass
class SweepPoint:
    sensor: str
    pd: float
    pfa: float
    seeds: tuple
    rmse_x: float
    rmse_y: float
    rmse_omega: float

    @property
    def rmse_position(self) -> float:
        return math.hypot(self.rmse_x, self.rmse_y)


def _radar(cfg: ScenarioConfig, pd: float, pfa: float) -> ScenarioConfig:
    """Radar P_d/P_fa, with clutter returns drawn as Binomial(cells, P_fa)."""
    rc = dataclasses.replace(cfg.radar, pd=pd, pfa=pfa, n_channels=1)
    clutter = dataclasses.replace(cfg.clutter, n=rc.n_pulses * rc.n_fast, p=pfa)
    return cfg.replace(radar=rc, clutter=clutter)


def _camera(cfg: ScenarioConfig, pd: float, fp_rate: float) -> ScenarioConfig:
    return cfg.replace(camera=dataclasses.replace(cfg.camera, pd=pd, fp_rate=fp_rate))


def _score(cfg: ScenarioConfig, seeds, n_frames):
    errs = []
    for s in seeds:
        res = track_loop(cfg.replace(seed=int(s)), n_frames)
        e = rmse(res.estimate_array()[:, [0, 1, 4]], res.truth_array()[:, [0, 1, 4]])
        errs.append(e)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(np.array(errs), axis=0)


def camera_sweep(base: ScenarioConfig, seeds=(0, 1, 2), grid=CAMERA_PD_GRID,
                 n_frames: int | None = None) -> list[SweepPoint]:
    """Camera P_d grid with the radar held at high P_d and low P_fa."""
    cfg = _radar(base, *GOOD_RADAR)
    out = []
    for pd in grid:
        ex, ey, ew = _score(_camera(cfg, pd, base.camera.fp_rate), seeds, n_frames)
        out.append(SweepPoint("camera", pd, math.nan, tuple(seeds), ex, ey, ew))
    return out


def radar_sweep(base: ScenarioConfig, seeds=(0, 1, 2), grid=RADAR_GRID,
                n_frames: int | None = None) -> list[SweepPoint]:
    """Radar (P_d, P_fa) grid with a good camera."""
    cam = _camera(base, *GOOD_CAMERA)
    out = []
    for pd, pfa in grid:
        ex, ey, ew = _score(_radar(cam, pd, pfa), seeds, n_frames)
        out.append(SweepPoint("radar", pd, pfa, tuple(seeds), ex, ey, ew))
    return out


def sweep_table(points) -> str:
    lines = [f"{'sensor':<8}{'P_d':>6}{'P_fa':>9}{'x RMSE':>9}{'y RMSE':>9}{'pos RMSE':>10}"
             f"{'w RMSE':>9}"]
    for p in points:
        pfa = "-" if math.isnan(p.pfa) else f"{p.pfa:.0e}"
        lines.append(f"{p.sensor:<8}{p.pd:>6.2f}{pfa:>9}{p.rmse_x:>9.2f}{p.rmse_y:>9.2f}"
                     f"{p.rmse_position:>10.2f}{p.rmse_omega:>9.3f}")
    return "\n".join(lines) + "\n"
