import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from egomotion import so3
from egomotion.imu_synth import (
    GRAVITY,
    ImuError,
    ImuSequence,
    NoiseModel,
    WorldFrame,
    apply_noise,
    synthesize_ideal,
)
from egomotion.trajectory import PoseSample, fit_spline

from conftest import sample_poses, wobble

RATE = 200.0


def _static(R=np.eye(3), duration=2.0):
    return fit_spline(sample_poses(lambda t: (np.array([1.0, -2.0, 0.5]), R), duration=duration))


def _zeros(n, rate=RATE):
    return ImuSequence(np.arange(n) / rate, np.zeros((n, 3)), np.zeros((n, 3)), rate)


def test_static_level_pose():
    imu = synthesize_ideal(_static(), WorldFrame(), RATE)
    assert np.max(np.abs(imu.accel - [0, 0, 9.81])) <= 1e-9
    assert np.max(np.abs(imu.gyro)) <= 1e-9
    assert np.allclose(np.diff(imu.t), 1 / RATE, atol=1e-12, rtol=0)
    assert imu.t[0] == 0.0


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_static_tilted_pose_reads_rotated_gravity(w):
    R = so3.exp(w)
    imu = synthesize_ideal(_static(R, duration=1.0), WorldFrame(), RATE)
    expected = R.T @ np.array([0, 0, 9.81])
    assert np.max(np.abs(imu.accel - expected)) <= 1e-9


def test_free_fall_reads_zero():
    fall = lambda t: (0.5 * GRAVITY * t * t, so3.exp([0.1 * t, 0.2, -0.3 * t]))
    imu = synthesize_ideal(fit_spline(sample_poses(fall, duration=2.0)), WorldFrame(), RATE)
    assert np.max(np.abs(imu.accel)) <= 1e-8


def test_constant_velocity_reads_gravity_only():
    imu = synthesize_ideal(fit_spline(sample_poses(lambda t: (np.array([t, 0.0, 0.0]), np.eye(3)))))
    assert np.max(np.abs(imu.accel - [0, 0, 9.81])) <= 1e-9


def test_frame_rotation_invariance():
    Q = so3.exp([0.4, -1.1, 0.7])
    base = sample_poses(wobble, duration=3.0)
    rotated = [PoseSample(s.t, Q @ s.p, so3.matrix_to_quat(Q @ s.R)) for s in base]
    a = synthesize_ideal(fit_spline(base), WorldFrame(), RATE)
    b = synthesize_ideal(fit_spline(rotated), WorldFrame(Q @ GRAVITY), RATE)
    assert np.max(np.abs(a.accel - b.accel)) <= 1e-9
    assert np.max(np.abs(a.gyro - b.gyro)) <= 1e-9


def test_sample_count_and_errors():
    spline = _static(duration=2.0)
    assert len(synthesize_ideal(spline, rate=RATE)) == 401
    with pytest.raises(ImuError):
        synthesize_ideal(spline, rate=0.0)
    with pytest.raises(ImuError):
        WorldFrame(np.array([0, 0, -5.0]))
    assert np.isclose(np.linalg.norm(WorldFrame(np.array([0, 0, -5.0]), allow_nonstandard_gravity=True).gravity), 5)


def test_zero_noise_is_bit_identical():
    imu = synthesize_ideal(fit_spline(sample_poses(wobble, duration=2.0)))
    out = apply_noise(imu, NoiseModel.zero(5))
    assert np.array_equal(out.accel, imu.accel) and np.array_equal(out.gyro, imu.gyro)
    assert np.array_equal(out.t, imu.t)


def test_white_noise_std():
    out = apply_noise(_zeros(400_000), NoiseModel(2.0e-2, 1.5e-3, 0.0, 0.0, seed=1))
    assert np.allclose(out.accel.std(axis=0), 2.0e-2 * np.sqrt(RATE), rtol=0.02)
    assert np.allclose(out.gyro.std(axis=0), 1.5e-3 * np.sqrt(RATE), rtol=0.02)


def test_white_noise_lag1_autocorrelation():
    x = apply_noise(_zeros(100_000), NoiseModel(2.0e-2, 0.0, 0.0, 0.0, seed=2)).accel
    for axis in range(3):
        a = x[:, axis] - x[:, axis].mean()
        assert abs(a[1:] @ a[:-1] / (a @ a)) <= 0.01


def test_bias_walk_variance():
    sigma, T = 3.0e-3, 10.0
    n = int(T * RATE) + 1
    finals = np.array(
        [apply_noise(_zeros(n), NoiseModel(0.0, 0.0, sigma, 0.0, seed=s)).accel[-1] for s in range(1000)]
    )
    # pooled over the three i.i.d. axes
    assert np.mean(finals**2) == pytest.approx(sigma**2 * T, rel=0.05)


def test_bias_starts_at_zero_and_is_recorded():
    out = apply_noise(_zeros(50), NoiseModel(0.0, 0.0, 1e-2, 1e-3, seed=3))
    assert np.array_equal(out.bias_accel[0], np.zeros(3))
    assert np.array_equal(out.accel, out.bias_accel)
    assert np.array_equal(out.gyro, out.bias_gyro)


def test_noise_determinism():
    imu = _zeros(1000)
    a = apply_noise(imu, NoiseModel(seed=11))
    b = apply_noise(imu, NoiseModel(seed=11))
    c = apply_noise(imu, NoiseModel(seed=12))
    assert np.array_equal(a.accel, b.accel) and np.array_equal(a.gyro, b.gyro)
    assert np.max(np.abs(a.accel - c.accel)) > 0


def test_streams_do_not_interact():
    imu = _zeros(500)
    only_accel = apply_noise(imu, NoiseModel(2e-2, 0.0, 0.0, 0.0, seed=4))
    both = apply_noise(imu, NoiseModel(2e-2, 1.5e-3, 0.0, 0.0, seed=4))
    assert np.array_equal(only_accel.accel, both.accel)


def test_non_uniform_timestamps_rejected():
    imu = _zeros(10)
    t = imu.t.copy()
    t[5] += 1e-3
    with pytest.raises(ImuError):
        apply_noise(ImuSequence(t, imu.gyro, imu.accel, RATE), NoiseModel())


def test_negative_sigma_rejected():
    with pytest.raises(ImuError):
        NoiseModel(sigma_a=-1.0)
