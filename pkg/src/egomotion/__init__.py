"""IMU-guided keyframe selection and motion-vision token fusion at desk scale.

Modules
-------
trajectory
    Cubic B-spline position and cumulative SO(3) rotation fits of pose samples.
imu_synth
    Body-frame IMU readings from a fitted trajectory, plus a MEMS noise model.
preintegration
    Strapdown integration of IMU samples into rotation, velocity and position.
scene_sim
    Synthetic rooms, scan trajectories, landmark projection and view tokens.
cascade
    The three-stage keyframe filter and its threshold sensitivity sweep.
fusion
    GRU motion tokens and rotary cross-attention fusion with manual gradients.
"""

__version__ = "0.1.0"
