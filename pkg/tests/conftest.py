import numpy as np
import pytest

from isarfusion.radar_synth import RadarConfig
from isarfusion.scene import Scatterers


@pytest.fixture
def small_radar():
    """Desk waveform with 128 pulses: same range bins, 0.0125 s CPI."""
    return RadarConfig.desk(n_pulses=128)


def points(pos, refl=None, vel=None):
    """Visible point scatterers from an (N, 3) position list."""
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    n = len(pos)
    refl = np.ones(n) if refl is None else np.asarray(refl, dtype=float)
    vel = np.zeros(n) if vel is None else np.asarray(vel, dtype=float)
    return Scatterers(pos, refl, vel, np.ones(n, bool), np.zeros(n, int))


# PASS/FAIL lines from the acceptance suite, repeated after the test run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
