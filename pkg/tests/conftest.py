import math

import numpy as np
import pytest

from fimmimo.channel import EnvironmentConfig, link_model, pathloss, sample_environment, wavelength_from_frequency
from fimmimo.geometry import ArrayGeometry, OrientationAngles, frame_from_angles

ACCEPTANCE_RESULTS = []

LAMBDA = wavelength_from_frequency(28e9)
NOISE = 10 ** (-12.4)
P_10DBM = 0.01


def default_geoms(mx=2, my=2, nx=2, ny=2, spacing=0.5):
    frame = frame_from_angles(OrientationAngles(math.pi / 2, 3 * math.pi / 4, 0.0))
    d = spacing * LAMBDA
    tx = ArrayGeometry(mx, my, d, d, frame, [0.0, 0.0, 10.0])
    rx = ArrayGeometry(nx, ny, d, d, frame, [0.0, 100.0, 0.0])
    return tx, rx


def default_pathloss():
    return float(pathloss(math.hypot(100.0, 10.0)))


def default_link(seed, L=8, G=4, geoms=None):
    tx, rx = geoms or default_geoms()
    cfg = EnvironmentConfig(L, G, math.pi / 128, math.pi / 128, default_pathloss(), LAMBDA)
    env = sample_environment(cfg, seed)
    return link_model(env, tx, rx), env


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
