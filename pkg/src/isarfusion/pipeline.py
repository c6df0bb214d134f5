"""Per-CPI orchestration: scene, sensors, detection, fusion, imaging, metrics.

Every random draw comes from ``SeedSequence(seed, spawn_key=(stream, k))``
so a frame's randomness depends only on the master seed, the stream and the
frame index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import BehindCameraError, detect
from .config import ScenarioConfig
from .fusion import FusedState, MeasurementModel, Tracker, TrackRow
from .isar import (
    IsarImage,
    RadarMeasurement,
    StretchConfig,
    chirp_wavelength,
    compensate_and_stretch,
    form_image,
    image_gate,
    interferogram,
    measurements_from_clusters,
    os_cfar_detect,
    stretch_process,
)
from .metrics import RunReport, crossrange_patch, image_entropy, ssim, tabulate_run, to_db
from .radar_synth import RadarCube, spawn_clutter, synthesize_cpi
from .scene import TargetState, body_to_world, sample_state, scatterer_snapshot

__all__ = [
    "FrameRecord",
    "PipelineError",
    "RunResult",
    "carrier_doppler",
    "frame_seed",
    "radar_measurements",
    "run_scenario",
    "track_loop",
]

STREAM_RADAR, STREAM_CLUTTER, STREAM_CAMERA = 0, 1, 2


class PipelineError(RuntimeError):
    """A stage failed; carries the frame index and the stage name."""

    def __init__(self, k: int, stage: str, cause: BaseException):
        super().__init__(f"frame {k}, stage {stage}: {type(cause).__name__}: {cause}")
        self.k = k
        self.stage = stage


def frame_seed(master: int, stream: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(stream, k))


def carrier_doppler(f_d: float, r: float, cfg) -> float:
    """Refer a measured Doppler to the carrier.

    Without range alignment the slow-time phase advances at the mean
    instantaneous frequency of the sampled chirp (see
    :func:`~isarfusion.isar.chirp_wavelength`), not at ``f_c``.
    """
    return float(f_d * chirp_wavelength(cfg, r) / cfg.wavelength)


@dataclass
class FrameRecord:
    k: int
    t: float
    truth: TargetState
    radar: list
    camera: list
    row: TrackRow
    gt_image: IsarImage | None = None
    fused_image: IsarImage | None = None
    ssim: float = math.nan
    entropy_fused: float = math.nan
    entropy_uncompensated: float = math.nan
    compensation: tuple | None = None


@dataclass
class RunResult:
    config: ScenarioConfig
    frames: list = field(default_factory=list)
    report: RunReport | None = None

    def truth_array(self, relative=True) -> np.ndarray:
        off = self.config.layout.radar_position[:2] if relative else np.zeros(2)
        return np.array([[f.truth.x - off[0], f.truth.y - off[1], f.truth.vx, f.truth.vy,
                          f.truth.omega] for f in self.frames])

    def estimate_array(self) -> np.ndarray:
        return np.array([f.row.x for f in self.frames])


def _frame_times(cfg: ScenarioConfig, spec, k: int):
    T = cfg.radar.cpi
    t0 = k * T
    tm = min(t0 + T / 2, spec.duration)
    if t0 > spec.duration:
        raise ValueError(f"frame {k} starts after the trajectory ends ({spec.duration} s)")
    return t0, tm


def _uncompensated(cube: RadarCube, scfg: StretchConfig, window=None):
    st = stretch_process(cube, scfg)
    imgs = [form_image(st, channel=i, window=window) for i in range(cube.config.n_channels)]
    return imgs


def radar_measurements(img0: IsarImage, img1: IsarImage | None, cfg: ScenarioConfig) -> list:
    """CFAR, clustering and Doppler referencing of one range-Doppler frame."""
    rc = cfg.radar
    im = cfg.imaging
    dets = os_cfar_detect(img0, rc.pfa, im.cfar_train, im.cfar_guard, stride=im.cfar_stride)
    ok = (img0.range_axis[dets.range_index] > 0.5) & (img0.range_axis[dets.range_index] <= rc.max_range)
    dets = dets.subset(ok)
    ifg = None
    if img1 is not None:
        ifg = interferogram(img0, img1, rc.d, im.interferogram_gate_db,
                            chirp_wavelength(rc, img0.range_axis))
    out = []
    for m in measurements_from_clusters(dets, img0, ifg, im.cluster_gap):
        out.append(RadarMeasurement(m.r, carrier_doppler(m.f_d, m.r, rc), m.elevation,
                                    m.n_detections, m.k, m.power))
    return out


def _simulate_sensors(cfg: ScenarioConfig, spec, k: int, radar_on=True, camera_on=True):
    t0, tm = _frame_times(cfg, spec, k)
    rc = cfg.radar
    truth0 = sample_state(spec, t0)
    truth_mid = sample_state(spec, tm)
    cube = None
    if radar_on:
        scat = scatterer_snapshot(cfg.target, truth0, cfg.layout.radar_position, rc.wavelength)
        clutter = None
        if cfg.clutter.n > 0 and cfg.clutter.p > 0:
            clutter = spawn_clutter(cfg.clutter.n, cfg.clutter.p, cfg.clutter.region,
                                    cfg.clutter.reflectivity,
                                    frame_seed(cfg.seed, STREAM_CLUTTER, k))
        cube = synthesize_cpi(rc, scat, clutter, frame_seed(cfg.seed, STREAM_RADAR, k),
                              cfg.layout.radar_position, k)
    dets = []
    if camera_on:
        corners = body_to_world(cfg.target.corners, truth_mid)
        cam = cfg.camera
        dets = detect(cfg.projection(), corners, k, cam.pd, cam.fp_rate,
                      frame_seed(cfg.seed, STREAM_CAMERA, k), cam.intrinsics, cam.min_box,
                      cam.max_range, cfg.layout.camera_position)
        if cam.drop_truncated:
            dets = [d for d in dets if not d.truncated(cam.intrinsics)]
    return t0, tm, truth0, truth_mid, cube, dets


def _tracker(cfg: ScenarioConfig, spec=None, seed_track: bool = False) -> Tracker:
    model = MeasurementModel(cfg.radar.carrier_frequency, cfg.projection(),
                             cfg.layout.radar_position, cfg.reference_height)
    g = cfg.gate
    initial = None
    if seed_track:
        # a perfect position fix at the first frame; velocity and turn rate
        # start as the two-sensor initialiser would leave them
        _, tm = _frame_times(cfg, spec, 0)
        rel = sample_state(spec, tm).position - cfg.layout.radar_position[:2]
        initial = FusedState(np.r_[rel, 0.0, 0.0, 1e-3],
                             np.diag([100.0, 100.0, 100.0, 100.0, 1.0]), 0, tm)
    return Tracker(model, cfg.noise, g.radius, g.pixel, g.min_radius, g.min_pixel, g.n_sigma,
                   merge_radar=g.merge_radar, min_cluster=g.min_cluster,
                   confirm_radius=g.confirm_radius, max_misses=g.max_misses, initial=initial)


def track_loop(cfg: ScenarioConfig, n_frames: int | None = None, radar_on=True,
               camera_on=True, seed_track: bool = False) -> RunResult:
    """Sensors and fusion only: predict, gate and update once per frame.

    Each record's ``compensation`` holds the (r0, vr, omega) that the track
    hands to imaging of the following CPI. ``seed_track`` starts the track
    from the true position at the first frame instead of waiting for two
    confirming two-sensor frames; single-sensor runs need it.
    """
    spec = cfg.trajectory.build()
    scfg = StretchConfig.centered(cfg.radar)
    tracker = _tracker(cfg, spec, seed_track)
    res = RunResult(cfg)
    for k in range(n_frames or cfg.frames):
        stage = "sensors"
        try:
            t0, tm, _, truth_mid, cube, cam = _simulate_sensors(cfg, spec, k, radar_on, camera_on)
            radar = []
            if cube is not None:
                stage = "detection"
                imgs = _uncompensated(cube, scfg, cfg.imaging.window)
                radar = radar_measurements(imgs[0], imgs[1] if len(imgs) > 1 else None, cfg)
            stage = "fusion"
            row = tracker.step(k, tm, radar, cam)
            comp = tracker.compensation(t0 + cfg.radar.cpi)
        except (BehindCameraError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PipelineError(k, stage, exc) from exc
        res.frames.append(FrameRecord(k, tm, truth_mid, radar, cam, row, compensation=comp))
    return res


def _patch_db(img: IsarImage, omega: float, center: float, cfg: ScenarioConfig):
    im = cfg.imaging
    patch = crossrange_patch(img, omega, center, im.patch_half_range, im.patch_half_cross,
                             im.patch_step)
    return to_db(patch, im.db_floor)


def run_scenario(cfg: ScenarioConfig, n_frames: int | None = None, keep_images: bool = False,
                 radar_on=True, camera_on=True, on_frame=None, save_cubes=None,
                 seed_track: bool = False) -> RunResult:
    """Full pipeline over ``n_frames`` CPIs (default ``cfg.frames``).

    Per frame: sensors at the CPI start (radar) and mid-CPI (camera),
    uncompensated range-Doppler detection, one fusion step, then the
    ground-truth- and track-compensated ISAR images, their SSIM on a common
    crossrange grid and the focus entropies. The track-compensated image of
    CPI k uses the state handed over after frame k-1. Images are dropped
    after scoring unless ``keep_images`` is set.

    ``on_frame(record, gt_image, fused_image, interferogram)`` is called
    after each frame; the interferogram of the fused image is only formed
    when a callback is given and the radar has two channels.
    ``save_cubes(cube)`` receives each raw cube before processing.
    ``seed_track`` is as in :func:`track_loop`.
    """
    spec = cfg.trajectory.build()
    rc = cfg.radar
    scfg = StretchConfig.centered(rc)
    tracker = _tracker(cfg, spec, seed_track)
    gate = cfg.imaging.omega_gate
    res = RunResult(cfg)
    handover = None
    radar_xy = cfg.layout.radar_position[:2]
    for k in range(n_frames or cfg.frames):
        stage = "sensors"
        try:
            t0, tm, truth0, truth_mid, cube, cam = _simulate_sensors(cfg, spec, k, radar_on,
                                                                   camera_on)
            radar, gt_img, fu_img, ifg = [], None, None, None
            s = e_fu = e_un = math.nan
            if cube is not None and save_cubes is not None:
                save_cubes(cube)
            if cube is not None:
                stage = "detection"
                imgs = _uncompensated(cube, scfg, cfg.imaging.window)
                radar = radar_measurements(imgs[0], imgs[1] if len(imgs) > 1 else None, cfg)
            stage = "fusion"
            row = tracker.step(k, tm, radar, cam)

            if cube is not None:
                stage = "imaging"
                rel = truth0.position - radar_xy
                r_gt = float(np.hypot(*rel))
                vr_gt = float(rel @ truth0.velocity / r_gt)
                w_gt = truth_mid.omega
                if image_gate(w_gt, gate):
                    gt_img = form_image(compensate_and_stretch(cube, scfg, r_gt, vr_gt), w_gt,
                                        gate=gate, window=cfg.imaging.window)
                if handover is not None:
                    r0, vr, w = handover
                    comp = compensate_and_stretch(cube, scfg, r0, vr)
                    # focus is judged on the range-Doppler map, so it needs no crossrange gate
                    stage = "metrics"
                    e_fu = image_entropy(form_image(comp, window=cfg.imaging.window))
                    e_un = image_entropy(imgs[0])
                if handover is not None and image_gate(handover[2], gate):
                    stage = "imaging"
                    fu_img = form_image(comp, w, gate=gate, window=cfg.imaging.window)
                    if on_frame is not None and rc.n_channels == 2:
                        fu_1 = form_image(comp, w, channel=1, gate=gate,
                                          window=cfg.imaging.window)
                        ifg = interferogram(fu_img, fu_1, rc.d, cfg.imaging.interferogram_gate_db,
                                            chirp_wavelength(rc, fu_img.range_axis))
                if gt_img is not None and fu_img is not None:
                    stage = "metrics"
                    s = ssim(_patch_db(gt_img, w_gt, r_gt, cfg),
                             _patch_db(fu_img, fu_img.omega, r_gt, cfg), cfg.imaging.ssim)
            handover = tracker.compensation(t0 + rc.cpi)
        except (BehindCameraError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise PipelineError(k, stage, exc) from exc

        rec = FrameRecord(k, tm, truth_mid, radar, cam, row, ssim=s, entropy_fused=e_fu,
                          entropy_uncompensated=e_un, compensation=handover)
        if keep_images:
            rec.gt_image, rec.fused_image = gt_img, fu_img
        if on_frame is not None:
            on_frame(rec, gt_img, fu_img, ifg)
        res.frames.append(rec)

    gt_w = [f.truth.omega for f in res.frames]
    # the turn rate used to image frame k is the one handed over after frame k-1
    fused_w = [math.nan] + [f.compensation[2] if f.compensation else math.nan
                            for f in res.frames[:-1]]
    res.report = tabulate_run(cfg.trajectory.kind, gt_w, fused_w, [f.ssim for f in res.frames],
                              res.truth_array(), res.estimate_array(),
                              [f.entropy_fused for f in res.frames],
                              [f.entropy_uncompensated for f in res.frames], gate)
    return res
