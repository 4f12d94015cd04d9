"""Fuse keyframe tokens with GRU motion tokens and check the gradients.

Run: python3 demos/03_fusion.py
"""

import numpy as np

from egomotion import cascade, suite
from egomotion.fusion import (
    FusionDims,
    build_motion_tokens,
    finite_difference_grads,
    fusion_forward,
    fusion_grad,
    gradient_errors,
    init_params,
    record_segments,
)

# Keyframes from a short scan supply both the visual tokens and the IMU segments.
prep = suite.prepare(suite.Scenario("demo", seed=1002, duration=12.0, noise="zero"))
records, _ = prep.run(cascade.CascadeConfig())
imu = prep.imu

dims = FusionDims(d_model=32, n_heads=4, gru_hidden=16, max_segment_len=64)
params = init_params(dims, seed=0)

# Project the 256-d view tokens down to the model width with a fixed random map.
proj = np.random.default_rng(0).standard_normal((256, dims.d_model)) / 16.0
vis = np.array([r.visual_token for r in records]) @ proj
motion = build_motion_tokens(records, imu, params, dims)
print(f"{len(records)} keyframes -> visual {vis.shape}, motion {motion.data.shape}")

fused = fusion_forward(vis, record_segments(records, imu), params, dims)
print(f"fused tokens {fused.data.shape}, mean change {np.abs(fused.data - vis).mean():.3f}")

# Reverse-mode gradients against central differences on a small problem.
small = FusionDims(d_model=8, n_heads=2, d_ff=16, gru_hidden=4, gru_layers=1)
p_small = init_params(small, seed=1)
g = np.random.default_rng(1)
vis_s = g.standard_normal((3, small.d_model))
segs = [np.hstack([g.standard_normal((4, 3)), 9.81 + g.standard_normal((4, 3))]) for _ in range(2)]
loss, analytic = fusion_grad(vis_s, segs, p_small, small)
numeric = finite_difference_grads(lambda p: float(np.sum(fusion_forward(vis_s, segs, p, small).data ** 2)), p_small)
worst = max(gradient_errors(analytic, numeric).items(), key=lambda kv: kv[1])
print(f"loss {loss:.4f}; worst relative gradient error {worst[1]:.1e} in {worst[0]}")
