"""Bidirectional stacked GRU encoder with a hand-written backward pass.

Gate layout in every weight matrix is ``[update | reset | candidate]`` along
the last axis, with the row-vector convention ``x @ w_input``.
"""

import numpy as np

from .params import IMU_FEATURES, FusionError

__all__ = ["segment_features", "encode_segment", "encode_forward", "encode_backward", "ACCEL_SCALE"]

# accelerometer readings sit around 9.81; scale them to the gyro's order of magnitude
ACCEL_SCALE = 1.0 / 9.81


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def segment_features(segment, max_len=None):
    """``(L, 6)`` array ``[gyro, accel / 9.81]`` from samples or an array.

    Segments longer than ``max_len`` are stride-subsampled to at most
    ``max_len`` rows.
    """
    if hasattr(segment, "gyro") and hasattr(segment, "accel") and np.ndim(segment.gyro) == 2:
        x = np.hstack([segment.gyro, segment.accel])
    elif isinstance(segment, np.ndarray):
        x = np.asarray(segment, dtype=np.float64)
    else:
        rows = [np.concatenate([s.gyro, s.accel]) for s in segment]
        x = np.array(rows, dtype=np.float64).reshape(len(rows), -1) if rows else np.zeros((0, IMU_FEATURES))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != IMU_FEATURES:
        raise FusionError(f"IMU segment must have shape (L, {IMU_FEATURES}), got {x.shape}")
    if len(x) == 0:
        raise FusionError("empty IMU segment")
    if max_len is not None and len(x) > max_len:
        stride = -(-len(x) // max_len)
        x = x[::stride]
    x = x.copy()
    x[:, 3:] *= ACCEL_SCALE
    return x


def _run(xs, w_in, w_h, b):
    """One direction over ``xs``; returns hidden states and the step cache."""
    n, h = len(xs), w_h.shape[0]
    pre = xs @ w_in + b
    hs = np.zeros((n, h))
    gates = np.zeros((n, 3, h))
    prev = np.zeros(h)
    for t in range(n):
        zr = _sigmoid(pre[t, : 2 * h] + prev @ w_h[:, : 2 * h])
        z, r = zr[:h], zr[h:]
        c = np.tanh(pre[t, 2 * h :] + (r * prev) @ w_h[:, 2 * h :])
        prev = (1.0 - z) * prev + z * c
        hs[t] = prev
        gates[t] = z, r, c
    return hs, gates


def _run_backward(xs, hs, gates, w_in, w_h, dhs):
    n, h = hs.shape
    d_pre = np.zeros((n, 3 * h))
    d_wh = np.zeros_like(w_h)
    carry = np.zeros(h)
    for t in range(n - 1, -1, -1):
        prev = hs[t - 1] if t > 0 else np.zeros(h)
        z, r, c = gates[t]
        dh = dhs[t] + carry
        dz = dh * (c - prev)
        dc_pre = dh * z * (1.0 - c * c)
        d_rh = dc_pre @ w_h[:, 2 * h :].T
        dr_pre = d_rh * prev * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        d_zr = np.concatenate([dz_pre, dr_pre])
        d_wh[:, : 2 * h] += np.outer(prev, d_zr)
        d_wh[:, 2 * h :] += np.outer(r * prev, dc_pre)
        carry = dh * (1.0 - z) + d_rh * r + d_zr @ w_h[:, : 2 * h].T
        d_pre[t, : 2 * h] = d_zr
        d_pre[t, 2 * h :] = dc_pre
    return d_pre @ w_in.T, xs.T @ d_pre, d_wh, d_pre.sum(axis=0)


def encode_forward(x, params, dims):
    """Motion token of one feature sequence ``x`` plus the cache for backward."""
    cache = []
    inp = x
    for layer in range(dims.gru_layers):
        outs = []
        for direction in ("fwd", "bwd"):
            p = f"gru.{layer}.{direction}"
            seq = inp if direction == "fwd" else inp[::-1]
            hs, gates = _run(seq, params[p + ".w_input"], params[p + ".w_hidden"], params[p + ".bias"])
            cache.append((seq, hs, gates))
            outs.append(hs if direction == "fwd" else hs[::-1])
        inp = np.hstack(outs)
    h = dims.gru_hidden
    summary = np.concatenate([inp[-1, :h], inp[0, h:]])
    token = summary @ params["gru.out.weight"] + params["gru.out.bias"]
    return token, (cache, summary, len(x))


def encode_backward(d_token, cache, params, dims, grads):
    """Accumulate parameter gradients of one encoded segment into ``grads``."""
    steps, summary, n = cache
    h = dims.gru_hidden
    grads["gru.out.weight"] += np.outer(summary, d_token)
    grads["gru.out.bias"] += d_token
    d_summary = params["gru.out.weight"] @ d_token
    d_out = np.zeros((n, 2 * h))
    d_out[-1, :h] = d_summary[:h]
    d_out[0, h:] = d_summary[h:]
    for layer in range(dims.gru_layers - 1, -1, -1):
        d_in = 0.0
        for k, direction in enumerate(("fwd", "bwd")):
            p = f"gru.{layer}.{direction}"
            seq, hs, gates = steps[2 * layer + k]
            dhs = d_out[:, :h] if direction == "fwd" else d_out[::-1, h:]
            dx, dw_in, dw_h, db = _run_backward(seq, hs, gates, params[p + ".w_input"], params[p + ".w_hidden"], dhs)
            grads[p + ".w_input"] += dw_in
            grads[p + ".w_hidden"] += dw_h
            grads[p + ".bias"] += db
            d_in = d_in + (dx if direction == "fwd" else dx[::-1])
        d_out = d_in
    return d_out


def encode_segment(segment, params, dims):
    """Motion token (``d_model`` vector) of one IMU segment."""
    x = segment_features(segment, dims.max_segment_len)
    return encode_forward(x, params, dims)[0]
