"""Image three point scatterers and read their elevation off the interferogram.

Each scatterer lands in the range-Doppler cell predicted from its range and
radial speed; the phase difference between the two stacked receivers gives
its elevation angle.

    python3 demos/01_point_scatterers.py
"""

import numpy as np

from isarfusion.isar import StretchConfig, chirp_wavelength, form_image, interferogram, stretch_process
from isarfusion.radar_synth import RadarConfig, synthesize_cpi
from isarfusion.scene import Scatterers

cfg = RadarConfig.desk(n_pulses=128)
rng = np.array([6.0, 11.0, 15.5])
speed = np.array([0.0, -2.5, 3.0])           # positive = receding
elev = np.deg2rad([0.0, 4.0, -6.0])
pos = np.column_stack([rng * np.cos(elev), np.zeros(3), rng * np.sin(elev)])
scat = Scatterers(pos, np.ones(3), speed, np.ones(3, bool), np.zeros(3, int))

cube = stretch_process(synthesize_cpi(cfg, scat, None, 0, noise=False), StretchConfig.centered(cfg))
top = form_image(cube, channel=0, window="hann")
bottom = form_image(cube, channel=1, window="hann")
ifg = interferogram(top, bottom, cfg.d, wavelength=chirp_wavelength(cfg, top.range_axis))

print(f"{'range':>7}{'speed':>7}{'pred r':>9}{'pred fD':>10}{'peak r':>9}{'peak fD':>10}{'elev':>8}")
mag = np.abs(top.data)
for r, v, e in zip(rng, speed, elev):
    r_pred = r + v * cfg.cpi / 2             # range at mid-CPI
    fd_pred = 2 * v / chirp_wavelength(cfg, r)
    i = int(round((fd_pred - top.doppler_axis[0]) / top.doppler_step))
    j = int(round((r_pred - top.range_axis[0]) / top.range_step))
    a, b = np.unravel_index(mag[i - 2:i + 3, j - 2:j + 3].argmax(), (5, 5))
    pi, pj = i - 2 + a, j - 2 + b
    print(f"{r:7.2f}{v:7.2f}{r_pred:9.3f}{fd_pred:10.1f}{top.range_axis[pj]:9.3f}"
          f"{top.doppler_axis[pi]:10.1f}{np.rad2deg(ifg.theta[pi, pj]):8.3f}")
print("true elevations (deg):", np.rad2deg(elev))
