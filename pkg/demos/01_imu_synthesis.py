"""Fit a spline to a scan, synthesize its IMU, and integrate it back.

Run: python3 demos/01_imu_synthesis.py
"""

import numpy as np

from egomotion import imu_synth, preintegration, scene_sim
from egomotion.trajectory import fit_spline

# A 12 s walkthrough of the default room, sampled at 30 Hz.
poses = scene_sim.generate_scan_trajectory(seed=3, style="walkthrough", duration=12.0)
spline = fit_spline(poses)
print(f"{len(poses)} poses fitted on [{spline.t0:.2f}, {spline.t1:.2f}] s")

# Noise-free readings first: accel is specific force in the body frame.
ideal = imu_synth.synthesize_ideal(spline)
print(f"{len(ideal)} IMU samples at {ideal.rate:.0f} Hz")
print(f"mean |accel| = {np.linalg.norm(ideal.accel, axis=1).mean():.3f} m/s^2 (gravity dominates)")

# Integrating the ideal stream from the true start state recovers the path.
start = preintegration.NavState.initial(
    spline.t0, spline.eval_rotation(spline.t0), spline.eval_velocity(spline.t0), spline.eval_position(spline.t0)
)
end = preintegration.integrate(start, ideal)
err = np.linalg.norm(end.p - spline.eval_position(end.t))
print(f"ideal strapdown position error after {end.t - start.t:.1f} s: {err * 1e3:.3f} mm")

# The same stream with MEMS white noise and bias random walk drifts quickly.
noisy = imu_synth.apply_noise(ideal, imu_synth.NoiseModel(seed=3))
one_second = int(noisy.rate)
for horizon in (1, 4, 12):
    k = min(horizon * one_second, len(noisy) - 1)
    s = preintegration.integrate(start, noisy, 0, k + 1)
    drift = np.linalg.norm(s.p - spline.eval_position(s.t))
    print(f"noisy strapdown drift at {s.t - start.t:5.2f} s: {drift:.3f} m")
