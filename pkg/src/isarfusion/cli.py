"""Command line: ``run``, ``isar``, ``report`` and ``sweep``.

Every subcommand accepts ``--config`` (scenario file), ``--seed``,
``--out`` and ``--frames``; unset flags keep the scenario's values.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .config import ConfigError, ScenarioConfig, load, save
from .fusion import FusedState, predict
from .isar import (
    StretchConfig,
    chirp_wavelength,
    compensate_and_stretch,
    form_image,
    image_gate,
    interferogram,
    stretch_process,
)
from .metrics import crossrange_patch, tabulate_run
from .pipeline import PipelineError, run_scenario
from .sweep import camera_sweep, radar_sweep, sweep_table

log = logging.getLogger("isarfusion")


def _scenario(args) -> ScenarioConfig:
    cfg = load(args.config) if args.config else ScenarioConfig()
    if getattr(args, "trajectory", None):
        cfg = cfg.replace(trajectory=dataclasses.replace(cfg.trajectory, kind=args.trajectory))
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.frames is not None:
        kw["frames"] = args.frames
    if args.out is not None:
        kw["output_dir"] = args.out
    return cfg.replace(**kw) if kw else cfg


def _axis_comments(img, omega=None):
    cross = "crossrange" if img.crossrange_axis is not None else "doppler"
    axis = img.crossrange_axis if img.crossrange_axis is not None else img.doppler_axis
    c = [f"rows {cross} {axis[0]!r} {axis[-1]!r}",
         f"cols range {img.range_axis[0]!r} {img.range_axis[-1]!r}", f"k {img.k}"]
    if omega is not None:
        c.append(f"omega {omega!r}")
    return c


def cmd_run(args) -> int:
    cfg = _scenario(args)
    out = fio.ensure_dir(cfg.output_dir)
    img_dir = fio.ensure_dir(out / "images")
    cube_dir = fio.ensure_dir(out / "cubes") if args.save_cubes else None
    save(cfg, out / "scenario.cfg")
    im = cfg.imaging
    radar_xy = cfg.layout.radar_position[:2]

    def on_frame(rec, gt, fu, ifg):
        r_gt = float(np.hypot(*(rec.truth.position - radar_xy)))
        for name, img in (("gt", gt), ("fused", fu)):
            if img is None:
                continue
            patch = crossrange_patch(img, img.omega, r_gt, im.patch_half_range,
                                     im.patch_half_cross, im.patch_step)
            comments = [f"rows crossrange {-im.patch_half_cross!r} {im.patch_half_cross!r}",
                        f"cols range {r_gt - im.patch_half_range!r} "
                        f"{r_gt + im.patch_half_range!r}", f"k {rec.k}", f"omega {img.omega!r}"]
            fio.write_pgm(img_dir / f"{name}_{rec.k:03d}.pgm", patch, im.db_floor, comments)
            if args.csv:
                fio.write_image_csv(img_dir / f"{name}_{rec.k:03d}.csv", img)
        if fu is not None and ifg is not None:
            fio.write_interferogram_csv(img_dir / f"elevation_{rec.k:03d}.csv", fu, ifg)
        log.info("frame %d: %d radar, %d camera, ssim %.3f", rec.k, len(rec.radar),
                 len(rec.camera), rec.ssim)

    save_cube = None
    if cube_dir is not None:
        save_cube = lambda cube: fio.write_cube(cube_dir / f"cube_{cube.k:03d}.rcub", cube)
    res = run_scenario(cfg, on_frame=on_frame, save_cubes=save_cube)
    fio.write_track_csv(out / "track.csv", [f.row for f in res.frames])
    fio.write_truth_csv(out / "truth.csv", res.frames)
    fio.write_radar_csv(out / "radar.csv", res.frames)
    fio.write_camera_csv(out / "camera.csv", res.frames)
    fio.write_frames_csv(out / "frames.csv", res.frames)
    fio.write_report(out, [res.report])
    sys.stdout.write(fio.report_table([res.report]))
    return 0


def _handover(track: dict, k: int, cfg: ScenarioConfig):
    """State of the latest initialised row before CPI ``k``, propagated to its start."""
    ks = track["k"]
    ok = (ks < k) & (track["initialized"] > 0)
    if not ok.any():
        ok = (ks <= k) & (track["initialized"] > 0)
    if not ok.any():
        raise ValueError(f"track has no initialised row at or before frame {k}")
    i = int(np.flatnonzero(ok)[-1])
    names = ("x", "y", "vx", "vy", "omega")
    x = np.array([track[n][i] for n in names])
    P = np.diag([track[f"P_{n}"][i] for n in names])
    s = FusedState(x, P, int(ks[i]), float(track["t"][i]))
    t0 = k * cfg.radar.cpi
    if t0 != s.t:
        s = predict(s, cfg.noise, t0 - s.t)
    return s.range, s.radial_velocity, s.omega


def cmd_isar(args) -> int:
    cfg = _scenario(args)
    out = fio.ensure_dir(cfg.output_dir)
    track = fio.read_track_csv(args.track)
    im = cfg.imaging
    for path in args.cubes:
        cube = fio.ingest_cube(path)
        scfg = StretchConfig.centered(cube.config)
        raw = form_image(stretch_process(cube, scfg), window=im.window)
        raw.k = cube.k
        fio.write_pgm(out / f"rd_{cube.k:03d}.pgm", raw.data, im.db_floor, _axis_comments(raw))
        r0, vr, w = _handover(track, cube.k, cfg)
        if not image_gate(w, im.omega_gate):
            log.warning("frame %d: turn rate %.4f rad/s below the imaging gate", cube.k, w)
            continue
        comp = compensate_and_stretch(cube, scfg, r0, vr)
        img = form_image(comp, w, gate=im.omega_gate, window=im.window)
        img.k = cube.k
        fio.write_pgm(out / f"isar_{cube.k:03d}.pgm", img.data, im.db_floor,
                      _axis_comments(img, w))
        if args.csv:
            fio.write_image_csv(out / f"isar_{cube.k:03d}.csv", img)
        if cube.config.n_channels == 2:
            img1 = form_image(comp, w, channel=1, gate=im.omega_gate, window=im.window)
            ifg = interferogram(img, img1, cube.config.d, im.interferogram_gate_db,
                                chirp_wavelength(cube.config, img.range_axis))
            fio.write_interferogram_csv(out / f"elevation_{cube.k:03d}.csv", img, ifg)
        print(f"frame {cube.k}: r0 {r0:.2f} m, vr {vr:.2f} m/s, omega {w:.3f} rad/s")
    return 0


def cmd_report(args) -> int:
    reports = []
    for d in args.runs:
        d = Path(d)
        frames = fio.read_frames_csv(d / "frames.csv")
        track = fio.read_track_csv(d / "track.csv")
        truth = fio.read_track_csv(d / "truth.csv")
        cfg = load(d / "scenario.cfg")
        off = cfg.layout.radar_position[:2]
        tr = np.column_stack([truth["x"] - off[0], truth["y"] - off[1], truth["vx"],
                              truth["vy"], truth["omega"]])
        est = np.column_stack([track[n] for n in ("x", "y", "vx", "vy", "omega")])
        reports.append(tabulate_run(cfg.trajectory.kind, frames["gt_omega"],
                                    frames["fused_omega"], frames["ssim"], tr, est,
                                    frames["entropy_fused"], frames["entropy_uncompensated"],
                                    cfg.imaging.omega_gate))
    out = Path(args.out or ".")
    fio.write_report(out, reports)
    sys.stdout.write(fio.report_table(reports))
    return 0


def cmd_sweep(args) -> int:
    cfg = _scenario(args)
    out = fio.ensure_dir(cfg.output_dir)
    seeds = tuple(range(cfg.seed, cfg.seed + args.n_seeds))
    points = []
    if args.sensor in ("camera", "both"):
        points += camera_sweep(cfg, seeds, n_frames=args.frames)
    if args.sensor in ("radar", "both"):
        points += radar_sweep(cfg, seeds, n_frames=args.frames)
    fio.write_sweep_csv(out / "sweep.csv", points)
    table = sweep_table(points)
    (out / "sweep.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (dotted key = json lines)")
    common.add_argument("--seed", type=int, help="master RNG seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--frames", type=int, help="number of CPIs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="isarfusion", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate, track, image and score")
    r.add_argument("--trajectory", choices=("SSUT", "NNUT", "ENRT", "WSRT"))
    r.add_argument("--save-cubes", action="store_true", help="also write raw radar cubes")
    r.add_argument("--csv", action="store_true", help="also dump full images as CSV")
    r.set_defaults(func=cmd_run)

    i = sub.add_parser("isar", parents=[common], help="image recorded cubes with a track log")
    i.add_argument("cubes", nargs="+", help="cube files")
    i.add_argument("--track", required=True, help="track CSV supplying the motion state")
    i.add_argument("--csv", action="store_true")
    i.set_defaults(func=cmd_isar)

    rep = sub.add_parser("report", parents=[common], help="rebuild reports from run logs")
    rep.add_argument("runs", nargs="+", help="run output directories")
    rep.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", parents=[common], help="detection-statistics sweeps")
    s.add_argument("--trajectory", choices=("SSUT", "NNUT", "ENRT", "WSRT"))
    s.add_argument("--sensor", choices=("camera", "radar", "both"), default="both")
    s.add_argument("--n-seeds", type=int, default=3)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, fio.CubeFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
