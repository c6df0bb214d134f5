"""Radar-camera fusion for ISAR imaging of turning vehicles.

Modules
-------
scene        trajectories, target geometry and scatterer snapshots
radar_synth  FMCW cube synthesis with noise and clutter
isar         stretch processing, compensation, imaging, CFAR, interferometry
camera       pinhole projection and the statistical box detector
fusion       CTRV extended Kalman filter, gating and track management
metrics      SSIM, entropy, RMSE and run tabulation
pipeline     per-CPI orchestration with deterministic seeding
config, io   scenario files and every on-disk format
sweep, cli   detection-statistics sweeps and the command line
"""

from .config import ScenarioConfig, load, save
from .pipeline import run_scenario, track_loop

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "load", "run_scenario", "save", "track_loop"]
