"""File formats: radar cubes, 16-bit PGM images and CSV logs.

Cube layout (little endian)::

    magic  b"RCUB"
    u16    version
    u16    n_channels
    u32    n_pulses
    u32    n_fast
    i64    frame index k
    u16    n_config             number of float64 config values
    f64[n_config]               RadarConfig.header_values()
    8 B    config digest
    c16[n_channels, n_pulses, n_fast]
"""

from __future__ import annotations

import csv
import io as _io
import math
import os
import struct
from pathlib import Path

import numpy as np

from .radar_synth import RadarConfig, RadarCube

__all__ = [
    "CUBE_VERSION",
    "CubeDimensionError",
    "CubeFormatError",
    "CubeTruncatedError",
    "CubeVersionError",
    "ingest_cube",
    "read_frames_csv",
    "read_pgm",
    "read_report",
    "read_track_csv",
    "write_frames_csv",
    "write_interferogram_csv",
    "write_camera_csv",
    "write_cube",
    "write_image_csv",
    "write_pgm",
    "write_radar_csv",
    "write_report",
    "write_sweep_csv",
    "write_track_csv",
    "write_truth_csv",
]

CUBE_MAGIC = b"RCUB"
CUBE_VERSION = 1
LOG_VERSION = 1
MAX_CUBE_ELEMENTS = 1 << 31
_HEAD = struct.Struct("<4sHHIIqH")


class CubeFormatError(ValueError):
    """Not a cube file, or an inconsistent header."""


class CubeVersionError(CubeFormatError):
    """Cube written by an unknown format version."""


class CubeTruncatedError(CubeFormatError):
    """Payload shorter than the header promises."""

    def __init__(self, expected: int, actual: int):
        super().__init__(f"truncated cube: expected {expected} bytes, found {actual}")
        self.expected = expected
        self.actual = actual


class CubeDimensionError(CubeFormatError):
    """Header dimensions are implausibly large."""


def write_cube(path, cube: RadarCube) -> None:
    values = cube.config.header_values()
    n_ch, n_p, n_f = cube.data.shape
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(CUBE_MAGIC, CUBE_VERSION, n_ch, n_p, n_f, int(cube.k), len(values)))
        fh.write(struct.pack(f"<{len(values)}d", *values))
        fh.write(cube.config.digest())
        fh.write(np.ascontiguousarray(cube.data, dtype="<c16").tobytes())


def ingest_cube(path) -> RadarCube:
    """Read a cube written by :func:`write_cube` (or an external recorder)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise CubeTruncatedError(_HEAD.size, len(raw))
    magic, version, n_ch, n_p, n_f, k, n_cfg = _HEAD.unpack_from(raw)
    if magic != CUBE_MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}; not a radar cube")
    if version != CUBE_VERSION:
        raise CubeVersionError(f"unsupported cube version {version}")
    if n_ch * n_p * n_f > MAX_CUBE_ELEMENTS or 0 in (n_ch, n_p, n_f):
        raise CubeDimensionError(f"cube dimensions {n_ch}x{n_p}x{n_f} out of range")
    off = _HEAD.size
    need = off + 8 * n_cfg + 8 + 16 * n_ch * n_p * n_f
    if len(raw) < need:
        raise CubeTruncatedError(need, len(raw))
    if len(raw) > need:
        raise CubeFormatError(f"{len(raw) - need} trailing bytes after the payload")
    values = struct.unpack_from(f"<{n_cfg}d", raw, off)
    off += 8 * n_cfg
    digest = raw[off:off + 8]
    off += 8
    try:
        config = RadarConfig.from_header_values(values)
    except (TypeError, ValueError) as exc:
        raise CubeFormatError(f"bad radar configuration block: {exc}") from exc
    if config.digest() != digest:
        raise CubeFormatError("configuration digest mismatch")
    if (config.n_channels, config.n_pulses, config.n_fast) != (n_ch, n_p, n_f):
        raise CubeFormatError("payload dimensions disagree with the configuration")
    data = np.frombuffer(raw, dtype="<c16", offset=off).reshape(n_ch, n_p, n_f).astype(complex)
    return RadarCube(data, config, int(k))


def write_pgm(path, img, floor_db: float = -40.0, comments=()) -> None:
    """16-bit binary PGM of ``|img|`` in dB, ``floor_db`` .. 0 mapped to 0 .. 65535.

    Rows are the first array axis. ``comments`` lines (e.g. axis extents)
    are stored as ``#`` header comments.
    """
    mag = np.abs(np.asarray(img))
    peak = mag.max()
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / peak) if peak > 0 else np.full(mag.shape, floor_db)
    db = np.clip(db, floor_db, 0.0)
    pix = np.round((db - floor_db) / -floor_db * 65535).astype(">u2")
    h, w = pix.shape
    head = [b"P5", f"# version {LOG_VERSION}".encode(), f"# db_floor {floor_db}".encode()]
    head += [f"# {c}".encode() for c in comments]
    head += [f"{w} {h}".encode(), b"65535"]
    with open(path, "wb") as fh:
        fh.write(b"\n".join(head) + b"\n")
        fh.write(pix.tobytes())


def read_pgm(path):
    """Return (pixels, comments) of a binary PGM written by :func:`write_pgm`."""
    raw = Path(path).read_bytes()
    lines, pos, tokens = [], 0, []
    comments = []
    while len(tokens) < 4:
        end = raw.index(b"\n", pos)
        line = raw[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            comments.append(line[1:].strip())
        else:
            tokens += line.split()
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    pix = np.frombuffer(raw, dtype=dtype, offset=pos, count=w * h).reshape(h, w)
    return pix.astype(np.uint16), comments


def write_image_csv(path, image) -> None:
    """Long-format dump: doppler/crossrange, range, magnitude."""
    cross = image.crossrange_axis if image.crossrange_axis is not None else image.doppler_axis
    label = "crossrange_m" if image.crossrange_axis is not None else "doppler_hz"
    mag = np.abs(image.data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow([label, "range_m", "magnitude"])
        for i, c in enumerate(cross):
            for j, r in enumerate(image.range_axis):
                w.writerow([repr(float(c)), repr(float(r)), repr(float(mag[i, j]))])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


_STATE = ("x", "y", "vx", "vy", "omega")
TRACK_HEADER = (["k", "t", "initialized"] + list(_STATE) + [f"P_{s}" for s in _STATE]
                + [f"K_{m}_{n}" for m in (1, 2, 3) for n in range(1, 6)]
                + ["radar_accepted", "radar_rejected", "camera_accepted", "camera_rejected"])


def write_track_csv(path, rows) -> None:
    """Track log: mean, covariance diagonal, 3x5 gain and gate counts per frame."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(TRACK_HEADER)
        for r in rows:
            w.writerow([r.k, _fmt(r.t), int(r.initialized)] + [_fmt(v) for v in r.x]
                       + [_fmt(v) for v in r.P_diag] + [_fmt(v) for v in np.ravel(r.gain)]
                       + [r.radar_accepted, r.radar_rejected, r.camera_accepted,
                          r.camera_rejected])


def _check_version(first_row, path):
    if not first_row or not first_row[0].startswith("# version"):
        raise ValueError(f"{path}: missing version line")
    v = int(first_row[0].split()[-1])
    if v != LOG_VERSION:
        raise ValueError(f"{path}: unsupported log version {v}")


def read_track_csv(path) -> dict:
    """Columns of a track log as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        _check_version(next(rd, None), path)
        header = next(rd)
        rows = [[float(v) if v else math.nan for v in row] for row in rd]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {h: arr[:, i] for i, h in enumerate(header)}


def write_truth_csv(path, frames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(["k", "t", "x", "y", "vx", "vy", "omega", "yaw"])
        for f in frames:
            s = f.truth
            w.writerow([f.k] + [_fmt(v) for v in (s.t, s.x, s.y, s.vx, s.vy, s.omega, s.yaw)])


def write_camera_csv(path, frames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(["k", "p_u", "p_v", "u_min", "v_min", "u_max", "v_max", "false_positive"])
        for f in frames:
            for d in f.camera:
                w.writerow([f.k] + [_fmt(float(v)) for v in (*d.centroid, *d.box)]
                           + [int(d.is_false_positive)])


def write_radar_csv(path, frames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(["k", "range_m", "doppler_hz", "elevation_rad", "n_detections", "power"])
        for f in frames:
            for m in f.radar:
                w.writerow([f.k, _fmt(m.r), _fmt(m.f_d), _fmt(m.elevation), m.n_detections,
                            _fmt(m.power)])


FRAME_HEADER = ("k", "t", "gt_omega", "fused_omega", "ssim", "entropy_fused",
                "entropy_uncompensated", "handover_r0", "handover_vr", "handover_omega")


def write_frames_csv(path, frames) -> None:
    """Per-frame imaging log. ``fused_omega`` is the turn rate used for CPI k,
    i.e. the one handed over after frame k-1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(FRAME_HEADER)
        prev = None
        for f in frames:
            hand = f.compensation or (math.nan,) * 3
            used = prev[2] if prev else math.nan
            w.writerow([f.k] + [_fmt(float(v)) for v in (f.t, f.truth.omega, used, f.ssim,
                                                          f.entropy_fused,
                                                          f.entropy_uncompensated, *hand)])
            prev = f.compensation


def read_frames_csv(path) -> dict:
    return read_track_csv(path)


def write_interferogram_csv(path, image, ifg) -> None:
    """Valid interferogram bins only: doppler/crossrange, range, elevation (deg)."""
    cross = image.crossrange_axis if image.crossrange_axis is not None else image.doppler_axis
    label = "crossrange_m" if image.crossrange_axis is not None else "doppler_hz"
    rows, cols = np.nonzero(ifg.mask)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow([label, "range_m", "elevation_deg"])
        for i, j in zip(rows, cols):
            w.writerow([repr(float(cross[i])), repr(float(image.range_axis[j])),
                        repr(float(np.degrees(ifg.theta[i, j])))])


def write_sweep_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(["sensor", "pd", "pfa", "seeds", "rmse_x", "rmse_y", "rmse_position",
                    "rmse_omega"])
        for p in points:
            w.writerow([p.sensor, _fmt(p.pd), _fmt(p.pfa), " ".join(map(str, p.seeds)),
                        _fmt(p.rmse_x), _fmt(p.rmse_y), _fmt(p.rmse_position),
                        _fmt(p.rmse_omega)])


REPORT_COLUMNS = ("trajectory", "frames", "gt_images", "fused_images", "mean_ssim", "n_ssim",
                  "rmse_x", "rmse_y", "rmse_omega")


def report_table(reports) -> str:
    """Text table with GT/fused image counts and SSIM in percent."""
    out = _io.StringIO()
    out.write("SSIM is the mean over frames where both images exist.\n")
    out.write(f"{'Trajectory':<11}{'GT images':>10}{'Fused images':>14}{'SSIM (%)':>10}\n")
    for r in reports:
        s = "n/a" if math.isnan(r.mean_ssim) else f"{100 * r.mean_ssim:.1f}"
        out.write(f"{r.trajectory:<11}{r.gt_images:>10}{r.fused_images:>14}{s:>10}\n")
    return out.getvalue()


def write_report(directory, reports) -> None:
    """``report.csv`` plus the human-readable ``report.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# version {LOG_VERSION}"])
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.trajectory, r.n_frames, r.gt_images, r.fused_images,
                        _fmt(r.mean_ssim), r.n_ssim, _fmt(r.rmse_x), _fmt(r.rmse_y),
                        _fmt(r.rmse_omega)])
    (d / "report.txt").write_text(report_table(reports))


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        _check_version(next(rd, None), path)
        header = next(rd)
        return [dict(zip(header, row)) for row in rd]


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
