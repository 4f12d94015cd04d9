import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from egomotion import rng, suite
from egomotion.cascade import (
    THRESHOLDS,
    CascadeConfig,
    CascadeError,
    Frame,
    cosine_distance,
    run_cascade,
    sensitivity_sweep,
    uniform_keyframes,
)
from egomotion.imu_synth import ImuSequence

RATE = 200.0


def _imu(duration, gyro=(0, 0, 0), accel=(0, 0, 9.81), rate=RATE):
    n = int(round(duration * rate)) + 1
    return ImuSequence(np.arange(n) / rate, np.tile(gyro, (n, 1)).astype(float),
                       np.tile(accel, (n, 1)).astype(float), rate)


def _frames(n, fps=30.0):
    return [Frame(k, k / fps) for k in range(n)]


class Stubs:
    """Counting providers with values drawn from a seed."""

    def __init__(self, seed, parallax=None, dim=8):
        self.seed, self.fixed_parallax, self.dim = seed, parallax, dim
        self.token_calls = []

    def parallax(self, ref, cand):
        if self.fixed_parallax is not None:
            return self.fixed_parallax
        g = rng.stream(self.seed, "parallax", ref.index, cand.index)
        return float(g.uniform(0, 40)), int(g.integers(0, 60))

    def token(self, frame):
        self.token_calls.append(frame.index)
        return rng.stream(self.seed, "token", frame.index).standard_normal(self.dim)


@pytest.fixture(scope="module")
def prepared():
    return [suite.prepare(s) for s in suite.load_suite()[:2]]


def test_cosine_distance_cases():
    a = np.array([1.0, 2.0, -3.0])
    assert cosine_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1, 0], [0, 5]) == 1.0
    assert cosine_distance(a, -a) == 2.0
    with pytest.raises(CascadeError):
        cosine_distance([0, 0], [1, 0])


def test_static_camera_single_keyframe():
    stubs = Stubs(0, parallax=(100.0, 50))
    records, stats = run_cascade(_frames(300), _imu(10.0), CascadeConfig(), stubs.parallax, stubs.token)
    assert [r.frame_index for r in records] == [0]
    assert stats.n_pass_stage1 == 0 and stats.n_keyframes == 1
    assert stats.n_token_extractions == 1 == len(stubs.token_calls)


def test_pure_yaw_passes_stage1():
    # 20 deg of yaw between two frames one second apart, no translation
    imu = _imu(1.0, gyro=(0, 0, math.radians(20)))
    stubs = Stubs(0, parallax=(100.0, 50))
    records, stats = run_cascade([Frame(0, 0.0), Frame(1, 1.0)], imu, CascadeConfig(), stubs.parallax, stubs.token)
    assert stats.n_pass_stage1 == 1
    assert [r.frame_index for r in records] == [0, 1]


def test_thresholds_equal_metric_survives():
    tokens = {0: np.array([1.0, 0.0]), 1: np.array([0.6, 0.8])}
    token = lambda f: tokens[f.index]
    imu = _imu(1.0, gyro=(0, 0, math.radians(20)))
    frames = [Frame(0, 0.0), Frame(1, 1.0)]
    cfg = CascadeConfig(tau_p=15.0, tau_v=0.4)
    records, stats = run_cascade(frames, imu, cfg, lambda a, b: (15.0, 50), token)
    assert stats.n_pass_stage2 == 1 and len(records) == 2
    # just below either threshold discards
    _, stats = run_cascade(frames, imu, cfg, lambda a, b: (14.999, 50), token)
    assert stats.n_pass_stage2 == 0
    _, stats = run_cascade(frames, imu, CascadeConfig(tau_v=0.41), lambda a, b: (15.0, 50), token)
    assert stats.n_keyframes == 1


def test_lost_tracking_passes_stage2():
    imu = _imu(1.0, gyro=(0, 0, math.radians(20)))
    frames = [Frame(0, 0.0), Frame(1, 1.0)]
    _, stats = run_cascade(frames, imu, CascadeConfig(), lambda a, b: (0.0, 7), Stubs(1).token)
    assert stats.n_pass_stage2 == 1
    _, stats = run_cascade(frames, imu, CascadeConfig(), lambda a, b: (math.nan, 0), Stubs(1).token)
    assert stats.n_pass_stage2 == 1
    _, stats = run_cascade(frames, imu, CascadeConfig(), lambda a, b: (0.0, 8), Stubs(1).token)
    assert stats.n_pass_stage2 == 0


@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.integers(2, 120))
def test_counters_and_lazy_extraction(seed, yaw_rate, n_frames):
    stubs = Stubs(seed)
    imu = _imu(n_frames / 30.0, gyro=(0.1, 0.0, yaw_rate), accel=(0.3, 0.0, 9.81))
    records, stats = run_cascade(_frames(n_frames), imu, CascadeConfig(), stubs.parallax, stubs.token)
    # frame 0 is selected without passing the gates, hence the - 1
    assert stats.n_frames >= stats.n_pass_stage1 >= stats.n_pass_stage2 >= stats.n_keyframes - 1 >= 0
    assert len(stubs.token_calls) == stats.n_token_extractions == stats.n_pass_stage2 + 1
    assert records[0].frame_index == 0
    idx = [r.frame_index for r in records]
    assert all(b > a for a, b in zip(idx, idx[1:]))
    _check_partition(records, imu)


def _check_partition(records, imu):
    assert records[0].imu_segment[0] == 0
    for prev, rec in zip(records, records[1:]):
        assert rec.imu_segment[0] == prev.imu_segment[1]
    for rec in records:
        stop = rec.imu_segment[1]
        # the segment ends with the last sample at or before the keyframe time
        assert imu.t[stop - 1] <= rec.t + 1e-12
        assert stop == len(imu) or imu.t[stop] > rec.t


def test_walkthrough_bounds_and_partition(prepared):
    for prep in prepared:
        records, stats = prep.run(CascadeConfig())
        assert 12 <= stats.n_keyframes <= 35
        assert stats.extraction_fraction < 0.05
        _check_partition(records, prep.imu)


def test_determinism(prepared):
    prep = prepared[0]
    a, sa = prep.run(CascadeConfig())
    b, sb = prep.run(CascadeConfig())
    assert [r.frame_index for r in a] == [r.frame_index for r in b]
    assert all(np.array_equal(x.visual_token, y.visual_token) for x, y in zip(a, b))
    strip = lambda s: {k: v for k, v in s.to_dict().items() if k != "wall_time"}
    assert strip(sa) == strip(sb)


def test_gate_monotonicity_ladders(prepared):
    base = CascadeConfig()
    for prep in prepared:
        for name in THRESHOLDS:
            counts = [prep.run(base.scaled(name, f))[1].n_keyframes for f in (0.5, 0.75, 1.0, 1.5, 2.0)]
            assert all(b <= a for a, b in zip(counts, counts[1:])), (prep.scenario.name, name, counts)


def test_sweep_zero_delta_and_slow_translation():
    # 0.1 m/s along x in bursts; tokens and parallax always pass
    n = 600
    imu = _imu(n / 30.0)
    accel = imu.accel.copy()
    accel[(imu.t % 4.0) < 0.5, 0] = 0.2
    accel[((imu.t % 4.0) >= 2.0) & ((imu.t % 4.0) < 2.5), 0] = -0.2
    imu = ImuSequence(imu.t, imu.gyro, accel, RATE)

    def run(cfg):
        stubs = Stubs(3, parallax=(50.0, 40))
        return run_cascade(_frames(n), imu, cfg, stubs.parallax, stubs.token)

    report = sensitivity_sweep(CascadeConfig(), [0.0], {"slow": run})
    assert all(r["identical_keyframes"] and r["keyframe_change"] == 0 for r in report["runs"])
    base = run(CascadeConfig())[1].n_keyframes
    assert base > 2
    assert run(CascadeConfig().scaled("tau_d", 2.0))[1].n_keyframes <= base
    with pytest.raises(CascadeError):
        sensitivity_sweep(CascadeConfig(), [0.5], {})


def test_uniform_keyframes():
    idx = uniform_keyframes(1000, 32)
    assert len(idx) == 32 and idx[0] == 0 and idx[-1] == 999
    assert len(uniform_keyframes(10, 32)) == 10
    with pytest.raises(CascadeError):
        uniform_keyframes(10, 0)


def test_errors():
    stubs = Stubs(0)
    with pytest.raises(CascadeError):
        run_cascade([], _imu(1.0), CascadeConfig(), stubs.parallax, stubs.token)
    # frames beyond the IMU stream
    with pytest.raises(CascadeError):
        run_cascade(_frames(60), _imu(1.0), CascadeConfig(), stubs.parallax, stubs.token)
    # dropped IMU data spanning a frame interval
    imu = _imu(2.0)
    keep = (imu.t < 0.5) | (imu.t > 0.8)
    gappy = ImuSequence(imu.t[keep], imu.gyro[keep], imu.accel[keep], RATE)
    with pytest.raises(CascadeError):
        run_cascade(_frames(60), gappy, CascadeConfig(), stubs.parallax, stubs.token)
    with pytest.raises(CascadeError):
        CascadeConfig(tau_v=2.0)
    with pytest.raises(CascadeError):
        CascadeConfig(tau_d=0.0)
