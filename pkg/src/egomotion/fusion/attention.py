"""Rotary multi-head cross-attention and the feed-forward block.

Every op comes as a ``*_forward`` returning ``(out, cache)`` and a
``*_backward`` mapping the upstream gradient to input gradients, adding
parameter gradients into a ``grads`` dict.
"""

import math

import numpy as np
from scipy.special import erf

from .params import FusionError

__all__ = [
    "ROPE_BASE",
    "rope_angles",
    "rope_rotate",
    "softmax",
    "gelu",
    "attention_forward",
    "attention_backward",
    "ffn_forward",
    "ffn_backward",
    "cross_block_forward",
    "cross_block_backward",
]

ROPE_BASE = 10000.0


def rope_angles(positions, head_dim, base=ROPE_BASE):
    """Rotation angles ``(n, head_dim / 2)``: position times ``base ** (-2k / head_dim)``."""
    if head_dim % 2:
        raise FusionError(f"rotary embedding needs an even head width, got {head_dim}")
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    return np.multiply.outer(np.asarray(positions, dtype=np.float64), inv_freq)


def _rotate(x, angles, sign=1.0):
    cos, sin = np.cos(angles), sign * np.sin(angles)
    even, odd = x[..., 0::2], x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_rotate(x, position, base=ROPE_BASE):
    """Rotate coordinate pairs ``(2k, 2k+1)`` of ``x`` by position-dependent angles.

    ``x`` has the head width on its last axis; ``position`` is a scalar or
    broadcasts against ``x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=np.float64)
    return _rotate(x, rope_angles(position, x.shape[-1], base))


def softmax(s):
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    return cdf + x * np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _heads(x, n_heads):
    n, d = x.shape
    return x.reshape(n, n_heads, d // n_heads).transpose(1, 0, 2)  # (heads, n, dh)


def _merge(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def attention_forward(queries, context, q_pos, k_pos, w_q, w_k, w_v, n_heads):
    """Multi-head attention of ``queries`` over ``context`` with rotary Q and K.

    There is no output projection: head outputs are concatenated back to
    ``d_model``. Returns ``(out, weights, cache)`` with ``weights`` of shape
    ``(heads, n_query, n_context)``.
    """
    if queries.shape[1] != w_q.shape[0] or context.shape[1] != w_k.shape[0]:
        raise FusionError(f"attention dimension mismatch: {queries.shape} vs {context.shape}")
    dh = w_q.shape[1] // n_heads
    ang_q = rope_angles(q_pos, dh)
    ang_k = rope_angles(k_pos, dh)
    q = _rotate(_heads(queries @ w_q, n_heads), ang_q)
    k = _rotate(_heads(context @ w_k, n_heads), ang_k)
    v = _heads(context @ w_v, n_heads)
    weights = softmax(q @ k.transpose(0, 2, 1) / math.sqrt(dh))
    out = _merge(weights @ v)
    return out, weights, (queries, context, ang_q, ang_k, q, k, v, weights, n_heads)


def attention_backward(d_out, cache, w_q, w_k, w_v, grads, names):
    """Gradients w.r.t. ``queries`` and ``context``; weights into ``grads[names[i]]``."""
    queries, context, ang_q, ang_k, q, k, v, weights, n_heads = cache
    dh = q.shape[-1]
    d_o = _heads(d_out, n_heads)
    d_w = d_o @ v.transpose(0, 2, 1)
    d_v = weights.transpose(0, 2, 1) @ d_o
    d_s = weights * (d_w - np.sum(d_w * weights, axis=-1, keepdims=True)) / math.sqrt(dh)
    d_q = _merge(_rotate(d_s @ k, ang_q, -1.0))
    d_k = _merge(_rotate(d_s.transpose(0, 2, 1) @ q, ang_k, -1.0))
    d_v = _merge(d_v)
    grads[names[0]] += queries.T @ d_q
    grads[names[1]] += context.T @ d_k
    grads[names[2]] += context.T @ d_v
    return d_q @ w_q.T, d_k @ w_k.T + d_v @ w_v.T


def ffn_forward(x, w1, b1, w2, b2):
    pre = x @ w1 + b1
    act = gelu(pre)
    return act @ w2 + b2, (x, pre, act)


def ffn_backward(d_out, cache, w1, w2, grads, prefix):
    x, pre, act = cache
    grads[prefix + ".w2"] += act.T @ d_out
    grads[prefix + ".b2"] += d_out.sum(axis=0)
    d_pre = (d_out @ w2.T) * _gelu_grad(pre)
    grads[prefix + ".w1"] += x.T @ d_pre
    grads[prefix + ".b1"] += d_pre.sum(axis=0)
    return d_pre @ w1.T


def cross_block_forward(queries, context, q_pos, k_pos, params, q_name, kv_block, ffn_block, n_heads):
    """``queries + FFN(Attn(queries W_q, context W_k, context W_v))``.

    ``q_name`` names the query projection; keys and values are
    ``kv_block + ".key"``/``".value"``; the FFN lives under ``ffn_block``.
    """
    w_q, w_k, w_v = params[q_name], params[kv_block + ".key"], params[kv_block + ".value"]
    att, weights, a_cache = attention_forward(queries, context, q_pos, k_pos, w_q, w_k, w_v, n_heads)
    f = ffn_block + ".ffn"
    y, f_cache = ffn_forward(att, params[f + ".w1"], params[f + ".b1"], params[f + ".w2"], params[f + ".b2"])
    return queries + y, weights, (a_cache, f_cache, q_name, kv_block, ffn_block)


def cross_block_backward(d_out, cache, params, grads):
    a_cache, f_cache, q_name, kv_block, ffn_block = cache
    f = ffn_block + ".ffn"
    d_att = ffn_backward(d_out, f_cache, params[f + ".w1"], params[f + ".w2"], grads, f)
    names = (q_name, kv_block + ".key", kv_block + ".value")
    d_q, d_ctx = attention_backward(d_att, a_cache, *(params[n] for n in names), grads, names)
    return d_out + d_q, d_ctx
