"""Motion tokens, the two cross-attention layers and their composition."""

import numpy as np

from . import attention as att
from .gru import encode_backward, encode_forward, segment_features
from .params import FusionError, TokenMatrix, param_shapes

__all__ = [
    "record_segments",
    "build_motion_tokens",
    "fuse_layer1",
    "fuse_layer2",
    "fusion_forward",
    "fusion_grad",
]


def record_segments(records, imu):
    """IMU feature arrays between consecutive keyframes (one per record after the first)."""
    if not records:
        raise FusionError("at least one keyframe is required")
    segs = []
    prev_stop = records[0].imu_segment[1]
    for rec in records[1:]:
        start, stop = rec.imu_segment
        if start != prev_stop or not 0 <= start < stop <= len(imu):
            raise FusionError(
                f"keyframe {rec.frame_index}: IMU segment [{start}, {stop}) does not continue "
                f"at {prev_stop} inside a stream of {len(imu)} samples"
            )
        segs.append(np.hstack([imu.gyro[start:stop], imu.accel[start:stop]]))
        prev_stop = stop
    return segs


def _motion_tokens(segments, params, dims):
    rows, caches = [params["start_token"]], []
    for seg in segments:
        token, cache = encode_forward(segment_features(seg, dims.max_segment_len), params, dims)
        rows.append(token)
        caches.append(cache)
    n = len(rows)
    return TokenMatrix(np.array(rows), np.arange(1, n + 1)), caches


def build_motion_tokens(records, imu, params, dims):
    """Start token for the first keyframe, then one GRU token per IMU segment."""
    return _motion_tokens(record_segments(records, imu), params, dims)[0]


def _check_pair(vis, mot, dims):
    for name, tm in (("visual", vis), ("motion", mot)):
        if tm.data.shape[1] != dims.d_model:
            raise FusionError(f"{name} tokens have width {tm.data.shape[1]}, expected {dims.d_model}")
    if len(mot) == 0 or len(vis) == 0:
        raise FusionError("empty token matrix")


def _layer1(vis, mot, params, dims):
    _check_pair(vis, mot, dims)
    h = dims.n_heads
    v_out, w_v, c_v = att.cross_block_forward(
        vis.data, mot.data, vis.positions, mot.positions, params,
        "cross1.vision.query", "cross1.motion", "cross1.vision", h,
    )
    m_out, w_m, c_m = att.cross_block_forward(
        mot.data, vis.data, mot.positions, vis.positions, params,
        "cross1.motion.query", "cross1.vision", "cross1.motion", h,
    )
    return TokenMatrix(v_out, vis.positions), TokenMatrix(m_out, mot.positions), (w_v, w_m), (c_v, c_m)


def _layer2(vis, mot, params, dims):
    _check_pair(vis, mot, dims)
    out, weights, cache = att.cross_block_forward(
        vis.data, mot.data, vis.positions, mot.positions, params,
        "cross2.query", "cross2", "cross2", dims.n_heads,
    )
    return TokenMatrix(out, vis.positions), weights, cache


def fuse_layer1(vis, mot, params, dims, return_weights=False):
    """Bidirectional exchange; both directions read the layer inputs.

    Returns the updated visual and motion tokens, plus the attention weights
    of both directions when ``return_weights`` is set.
    """
    v_out, m_out, weights, _ = _layer1(vis, mot, params, dims)
    return (v_out, m_out, weights) if return_weights else (v_out, m_out)


def fuse_layer2(vis, mot, params, dims, return_weights=False):
    """Visual tokens query the motion tokens; the motion rows are dropped."""
    out, weights, _ = _layer2(vis, mot, params, dims)
    return (out, weights) if return_weights else out


def _visual(vis, n_frames, dims):
    if isinstance(vis, TokenMatrix):
        return vis
    data = np.asarray(vis, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != n_frames * dims.tokens_per_frame:
        raise FusionError(
            f"expected {n_frames * dims.tokens_per_frame} visual rows for {n_frames} keyframes, got {data.shape}"
        )
    return TokenMatrix.for_frames(data, n_frames, dims.tokens_per_frame)


def _forward(vis, segments, params, dims):
    mot, gru_caches = _motion_tokens(segments, params, dims)
    vis = _visual(vis, len(mot), dims)
    v1, m1, _, c1 = _layer1(vis, mot, params, dims)
    out, _, c2 = _layer2(v1, m1, params, dims)
    return out, (gru_caches, c1, c2)


def fusion_forward(vis, segments, params, dims):
    """Motion tokens, layer 1, layer 2; returns the fused visual tokens.

    ``segments[i]`` is the IMU between keyframes ``i`` and ``i + 1``, so N
    keyframes take N - 1 segments. ``vis`` is a :class:`TokenMatrix` or an
    ``(N * tokens_per_frame, d_model)`` array.
    """
    return _forward(vis, segments, params, dims)[0]


def fusion_grad(vis, segments, params, dims, loss="sum_squares"):
    """Loss value and reverse-mode gradients ``{name: array}`` for every parameter."""
    if loss != "sum_squares":
        raise FusionError(f"unsupported loss {loss!r}")
    out, (gru_caches, c1, c2) = _forward(vis, segments, params, dims)
    value = float(np.sum(out.data ** 2))
    grads = {name: np.zeros(shape) for name, shape in param_shapes(dims).items()}
    d_v1, d_m1 = att.cross_block_backward(2.0 * out.data, c2, params, grads)
    # layer 1: visual rows feed the vision block as queries and the motion block as context
    c_v, c_m = c1
    _, d_m_from_v = att.cross_block_backward(d_v1, c_v, params, grads)
    d_m0, _ = att.cross_block_backward(d_m1, c_m, params, grads)
    d_mot = d_m0 + d_m_from_v
    grads["start_token"] += d_mot[0]
    for row, cache in enumerate(gru_caches, start=1):
        encode_backward(d_mot[row], cache, params, dims, grads)
    return value, grads
