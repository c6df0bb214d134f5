"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
Long scenario runs are cached in module fixtures, so the whole module takes
several minutes on one core.
"""

import dataclasses
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE
from isarfusion.config import ScenarioConfig
from isarfusion.constants import SPEED_OF_LIGHT as C
from isarfusion.fusion import (
    FusedMeasurement,
    FusedState,
    MeasurementModel,
    ekf_step,
    transition,
    transition_jacobian,
    update,
)
from isarfusion.isar import (
    StretchConfig,
    chirp_wavelength,
    form_image,
    interferogram,
    os_cfar_detect,
    stretch_process,
)
from isarfusion.pipeline import run_scenario
from isarfusion.radar_synth import RadarConfig, synthesize_cpi
from isarfusion.scene import Scatterers
from isarfusion.sweep import camera_sweep, radar_sweep

TRAJECTORIES = ("ssut", "nnut", "enrt", "wsrt")


def _report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


@pytest.fixture(scope="module")
def runs():
    return {kind: run_scenario(ScenarioConfig.for_trajectory(kind)) for kind in TRAJECTORIES}


def _turn_frames(res):
    """Frames whose mid-CPI yaw rate belongs to the sharpest segment."""
    spec = res.config.trajectory.build()
    w_turn = max((w for _, w in spec.segments), key=abs)
    return [f for f in res.frames if f.truth.omega == w_turn], w_turn


def test_criterion_1_resolution():
    cfg = RadarConfig.measurement_table()
    checks = {
        "range 0.075 m": math.isclose(C / (2 * cfg.bandwidth), 0.075, rel_tol=1e-3)
        and math.isclose(cfg.range_resolution, C / (2 * cfg.bandwidth)),
        "doppler 10 Hz": math.isclose(cfg.doppler_resolution, 10.0)
        and math.isclose(1 / cfg.cpi, 10.0),
        "crossrange 0.19 m @0.1 rad/s": abs(cfg.crossrange_resolution(0.1) / 0.19 - 1) <= 0.03,
        "crossrange 1.98 m @0.01 rad/s": abs(cfg.crossrange_resolution(0.01) / 1.98 - 1) <= 0.02,
    }
    detail = (f"dr={cfg.range_resolution:.4f} m, df={cfg.doppler_resolution:.2f} Hz, "
              f"dx(0.1)={cfg.crossrange_resolution(0.1):.4f} m, "
              f"dx(0.01)={cfg.crossrange_resolution(0.01):.4f} m")
    assert _report(1, all(checks.values()), detail), checks


def _sparse_scene(rng, cfg, min_sep=4.0):
    """Up to five scatterers at least ``min_sep`` cells apart in range or Doppler."""
    n = int(rng.integers(1, 6))
    while True:
        r = rng.uniform(3, 20, n)
        v = rng.uniform(-5, 5, n)
        rr = r + v * cfg.cpi / 2
        fd = 2 * v / chirp_wavelength(cfg, r)
        dr = np.abs(rr[:, None] - rr[None]) / cfg.range_resolution
        dd = np.abs(fd[:, None] - fd[None]) * cfg.cpi
        if not np.any((dr < min_sep) & (dd < min_sep) & ~np.eye(n, dtype=bool)):
            break
    az = rng.uniform(-0.8, 0.8, n)
    el = np.deg2rad(rng.uniform(-20, 20, n))
    pos = np.column_stack([r * np.cos(el) * np.cos(az), r * np.cos(el) * np.sin(az),
                           r * np.sin(el)])
    return Scatterers(pos, np.ones(n), v, np.ones(n, bool), np.zeros(n, int)), rr, fd, el


def test_criterion_2_point_scatterer_oracle():
    cfg = RadarConfig.desk(n_pulses=128)
    rng = np.random.default_rng(2024)
    worst = np.zeros(3)
    n_points = 0
    for _ in range(100):
        scat, rr, fd, el = _sparse_scene(rng, cfg)
        cube = stretch_process(synthesize_cpi(cfg, scat, None, 0, noise=False),
                               StretchConfig.centered(cfg))
        i0 = form_image(cube, channel=0, window="hann")
        i1 = form_image(cube, channel=1, window="hann")
        ifg = interferogram(i0, i1, cfg.d, -80, chirp_wavelength(cfg, i0.range_axis))
        mag = np.abs(i0.data)
        for b in range(len(rr)):
            ri = (rr[b] - i0.range_axis[0]) / i0.range_step
            di = (fd[b] - i0.doppler_axis[0]) / i0.doppler_step
            r0, d0 = int(round(ri)), int(round(di))
            win = mag[d0 - 2:d0 + 3, r0 - 2:r0 + 3]
            a, c = np.unravel_index(win.argmax(), win.shape)
            pd, pr = d0 - 2 + a, r0 - 2 + c
            err = [abs(pr - ri), abs(pd - di), abs(np.rad2deg(ifg.theta[pd, pr] - el[b]))]
            worst = np.maximum(worst, err)
            n_points += 1
    ok = worst[0] <= 0.5 and worst[1] <= 0.5 and worst[2] < 0.1
    detail = (f"{n_points} scatterers, worst range {worst[0]:.3f} bin, doppler "
              f"{worst[1]:.3f} bin, elevation {worst[2]:.4f} deg")
    assert _report(2, ok, detail)


def _fd(f, x, eps=1e-6):
    cols = []
    for j in range(len(x)):
        dx = np.zeros(len(x))
        dx[j] = eps * max(1.0, abs(x[j]))
        cols.append((f(x + dx) - f(x - dx)) / (2 * dx[j]))
    return np.array(cols).T


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


def test_criterion_3_ekf():
    cfg = ScenarioConfig()
    model = MeasurementModel(cfg.radar.carrier_frequency, cfg.projection(),
                             cfg.layout.radar_position, cfg.reference_height)
    noise = cfg.noise
    rng = np.random.default_rng(3)
    states = [np.r_[rng.uniform(3, 30), rng.uniform(-8, 8), rng.uniform(-8, 8, 2),
                    rng.uniform(-1, 1)] for _ in range(100)]
    jac = max(max(_rel(transition_jacobian(x, noise.T), _fd(lambda v: transition(v, noise.T), x)),
                  _rel(model.H(x), _fd(model.h, x))) for x in states)

    truth = np.array([10.0, -3.0, 6.0, 0.0, 0.3])
    s = FusedState(truth + [1, -1, 0, 0, 0], np.diag([100.0, 100, 100, 100, 1]))
    min_eig, asym = np.inf, 0.0
    for k in range(10_000):
        truth = transition(truth, noise.T)
        if np.hypot(*truth[:2]) > 30 or truth[0] < 3:
            truth = np.array([10.0, -3.0, 6.0 * np.cos(k), 6.0 * np.sin(k), 0.3])
        z = model.h(truth) + rng.normal(0, [noise.sigma_range, noise.sigma_doppler,
                                            noise.sigma_pixel])
        keep = rng.random(3) < 0.7
        s, _ = ekf_step(s, FusedMeasurement(*(float(v) if o else None for v, o in zip(z, keep))),
                        noise, model)
        if np.hypot(*s.x[:2]) > 60 or s.x[0] < 1:
            s = FusedState(truth.copy(), np.diag([4.0, 4, 4, 4, 0.1]), s.k, s.t)
        asym = max(asym, np.max(np.abs(s.P - s.P.T)))
        min_eig = min(min_eig, np.linalg.eigvalsh(s.P).min())

    wide = dataclasses.replace(noise, sigma_doppler=1e6, sigma_pixel=1e6)
    gap = 0.0
    for x in states:
        if x[0] < 4:
            continue
        st = FusedState(x, np.diag([2.0, 2.0, 1.0, 1.0, 0.05]))
        h = model.h(x) + np.array([0.3, 50.0, 4.0])
        missing, _ = update(st, FusedMeasurement(r=h[0]), model, noise)
        limit, _ = update(st, FusedMeasurement(*h), model, wide)
        gap = max(gap, np.max(np.abs(limit.x - missing.x)))
    ok = jac <= 1e-6 and min_eig >= -1e-9 and asym == 0 and gap <= 1e-6
    detail = (f"jacobian rel err {jac:.1e}, min eig over 1e4 steps {min_eig:.2e}, "
              f"missing vs R->inf {gap:.1e}")
    assert _report(3, ok, detail)


def test_criterion_4_tracking(runs):
    res = runs["ssut"]
    frames, w_turn = _turn_frames(res)
    est = np.array([f.row.x[4] for f in frames])
    tracked = np.isfinite(est)
    err = np.sqrt(np.mean((est[tracked] - w_turn) ** 2)) if tracked.any() else math.inf
    bound = 0.1 * abs(w_turn)

    # gains at convergence: the last ten updates that used each input
    rows = [f.row for f in res.frames if f.row.initialized]
    dop = [r.gain[1] for r in rows if r.gain[1].any()][-10:]
    cam = [r.gain[2] for r in rows if r.gain[2].any()][-10:]
    k21 = [abs(g[0]) for g in dop]
    k22 = [abs(g[1]) for g in dop]
    k31 = [abs(g[0]) for g in cam]
    g = [max(v) if v else math.nan for v in (k21, k22, k31)]
    gains_ok = all(np.isfinite(g)) and max(g) < 0.05
    ok = tracked.all() and err <= bound and gains_ok
    detail = (f"turn w={w_turn:.3f} rad/s, w RMSE {err:.3f} (bound {bound:.3f}) over "
              f"{tracked.sum()}/{len(frames)} tracked CPIs; max |K21|={g[0]:.1e} m/Hz, "
              f"|K22|={g[1]:.1e} m/Hz, |K31|={g[2]:.1e} m/px")
    assert _report(4, ok, detail)


def test_criterion_5_table_trend(runs):
    rep = {k: runs[k].report for k in TRAJECTORIES}
    ssim = {k: rep[k].mean_ssim for k in TRAJECTORIES}
    others = [k for k in TRAJECTORIES if k != "nnut"]
    a = all(ssim[k] >= 0.85 for k in others) and all(ssim["nnut"] < ssim[k] for k in others)
    b = (rep["nnut"].fused_images > rep["nnut"].gt_images
         and rep["ssut"].gt_images > rep["ssut"].fused_images)
    detail = ", ".join(f"{k.upper()} SSIM {ssim[k]:.3f} GT/fused {rep[k].gt_images}/"
                       f"{rep[k].fused_images}" for k in TRAJECTORIES)
    detail += f"; (a) {'ok' if a else 'no'}, (b) {'ok' if b else 'no'}"
    assert _report(5, a and b, detail)


def test_criterion_6_degradation_sweep():
    base = ScenarioConfig()
    cam = camera_sweep(base, seeds=(0, 1, 2))
    rad = radar_sweep(base, seeds=(0, 1, 2))
    pos = [p.rmse_position for p in cam]          # ordered by rising camera P_d
    mono = all(pos[i] >= pos[i + 1] for i in range(len(pos) - 1))
    y_ok = all(p.rmse_y < 1.0 for p in cam)
    ratio = rad[0].rmse_x / rad[-1].rmse_x
    ok = mono and y_ok and ratio >= 2.0
    detail = ("camera P_d " + " ".join(f"{p.pd:.2f}:pos {p.rmse_position:.2f}/y {p.rmse_y:.2f}"
                                       for p in cam)
              + f"; radar x RMSE {rad[0].rmse_x:.2f} vs {rad[-1].rmse_x:.2f} (x{ratio:.2f})")
    assert _report(6, ok, detail)


def test_criterion_7_focusing(runs):
    frames, _ = _turn_frames(runs["enrt"])
    fused = np.array([f.entropy_fused for f in frames])
    raw = np.array([f.entropy_uncompensated for f in frames])
    have = np.isfinite(fused)
    lower = fused[have] < raw[have]
    ok = have.all() and lower.all()
    detail = (f"{len(frames)} turning CPIs, {have.sum()} with a fused state, "
              f"{lower.sum()} of those focused better; mean entropy "
              f"{fused[have].mean():.3f} vs {raw[have].mean():.3f}")
    assert _report(7, ok, detail)


def test_criterion_8_cfar_calibration():
    cfg = ScenarioConfig()
    rc, im = cfg.radar, cfg.imaging
    empty = Scatterers(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0, bool))
    images = []
    for seed in range(4):
        cube = stretch_process(synthesize_cpi(rc, empty, None, seed),
                               StretchConfig.centered(rc))
        images += [form_image(cube, channel=ch, window=im.window) for ch in range(rc.n_channels)]
    cells = sum(i.data.size for i in images)
    parts, ok = [], cells >= 1e6
    for pfa in (1e-3, 1e-4):
        n = sum(len(os_cfar_detect(i, pfa, im.cfar_train, im.cfar_guard, stride=im.cfar_stride))
                for i in images)
        sigma = math.sqrt(cells * pfa * (1 - pfa))
        z = (n - cells * pfa) / sigma
        ok &= abs(z) <= 3
        parts.append(f"P_fa {pfa:g}: {n} vs {cells * pfa:.0f} (z={z:+.2f})")
    assert _report(8, ok, f"{cells} cells; " + ", ".join(parts))
