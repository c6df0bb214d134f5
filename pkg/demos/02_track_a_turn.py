"""Follow a vehicle through a turn with the radar-camera filter.

Runs only the sensing and tracking part of the pipeline (no imaging) on
the south-to-south U-turn and prints the estimate next to the truth every
few frames. The yaw-rate estimate is what later scales Doppler into
crossrange.

    python3 demos/02_track_a_turn.py [n_frames]
"""

import sys

import numpy as np

from isarfusion.config import ScenarioConfig
from isarfusion.metrics import rmse
from isarfusion.pipeline import track_loop

n = int(sys.argv[1]) if len(sys.argv) > 1 else 60
res = track_loop(ScenarioConfig.for_trajectory("ssut"), n)
truth, est = res.truth_array(), res.estimate_array()

print(f"{'k':>3}{'x':>8}{'x est':>8}{'y':>8}{'y est':>8}{'w':>8}{'w est':>8}  radar/camera")
for f, t, e in list(zip(res.frames, truth, est))[::5]:
    print(f"{f.k:3d}{t[0]:8.2f}{e[0]:8.2f}{t[1]:8.2f}{e[1]:8.2f}{t[4]:8.3f}{e[4]:8.3f}"
          f"  {len(f.radar)}/{len(f.camera)}")
ex, ey, ew = rmse(est[:, [0, 1, 4]], truth[:, [0, 1, 4]])
print(f"RMSE x {ex:.2f} m, y {ey:.2f} m, yaw rate {ew:.3f} rad/s "
      f"({np.isfinite(est[:, 0]).sum()} tracked frames of {n})")
