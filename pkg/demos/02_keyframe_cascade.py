"""Select keyframes with the three-stage cascade and compare with uniform sampling.

Run: python3 demos/02_keyframe_cascade.py
"""

from dataclasses import replace

from egomotion import cascade, suite

# One walkthrough scenario: scene, scan, spline and a zero-noise IMU stream.
scenario = suite.Scenario("demo", seed=1001, noise="zero", room=((0, 0, 0), (8, 6, 3)))
prep = suite.prepare(scenario)
print(f"{len(prep.poses)} frames, {len(prep.scene.landmarks)} landmarks")

cfg = cascade.CascadeConfig()
records, stats = prep.run(cfg)
print(f"stage 1 passed {stats.n_pass_stage1} frames ({stats.stage1_retention:.1%})")
print(f"stage 2 passed {stats.n_pass_stage2} frames")
print(f"{stats.n_keyframes} keyframes from {stats.n_token_extractions} token extractions "
      f"({stats.extraction_fraction:.2%} of frames)")
print("keyframes:", [r.frame_index for r in records])

# A uniform baseline needs one token per kept frame.
uniform = cascade.uniform_keyframes(stats.n_frames, stats.n_keyframes)
print("uniform:  ", uniform.tolist())

# Tighter motion gates let more frames through to the costlier stages.
for factor in (0.5, 1.0, 2.0):
    _, s = prep.run(replace(cfg, tau_d=cfg.tau_d * factor, tau_theta=cfg.tau_theta * factor))
    print(f"motion gates x{factor:<3}: {s.n_pass_stage1:4d} pass stage 1, {s.n_keyframes:3d} keyframes")
