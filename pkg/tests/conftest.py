import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from egomotion import so3
from egomotion.trajectory import PoseSample, fit_spline

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def sample_poses(fn, duration=4.0, rate=30.0, t0=0.0):
    """Pose samples of ``fn(t) -> (p, R)`` on a uniform grid."""
    t = t0 + np.arange(int(round(duration * rate)) + 1) / rate
    out = []
    for ti in t:
        p, R = fn(ti)
        out.append(PoseSample(float(ti), p, so3.matrix_to_quat(R)))
    return out


def wobble(t):
    """Smooth, fully 3-D test motion with nonzero acceleration and angular rate."""
    p = np.array([0.8 * np.sin(0.7 * t), 0.5 * np.cos(0.4 * t), 0.2 * np.sin(1.1 * t)])
    R = so3.exp([0.3 * np.sin(0.5 * t), 0.2 * np.cos(0.6 * t), 0.9 * np.sin(0.3 * t)])
    return p, R


@pytest.fixture(scope="session")
def wobble_spline():
    return fit_spline(sample_poses(wobble, duration=6.0))


# -- acceptance criteria reporting ----------------------------------------------

ACCEPTANCE_LINES = pytest.StashKey[list]()


class Criterion:
    """Records one PASS/FAIL line per acceptance criterion."""

    def __init__(self, lines):
        self.lines, self.number, self.recorded = lines, None, False

    def __call__(self, number, title):
        self.number, self.title = number, title
        return self

    def done(self, ok, detail):
        line = f"criterion {self.number:>2d}  {'PASS' if ok else 'FAIL'}  {self.title}: {detail}"
        self.lines.append((self.number, line))
        self.recorded = True
        print(line)
        assert ok, line


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def criterion(request):
    c = Criterion(request.config.stash[ACCEPTANCE_LINES])
    yield c
    if c.number is not None and not c.recorded:
        c.lines.append((c.number, f"criterion {c.number:>2d}  FAIL  {c.title}: did not complete"))


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
