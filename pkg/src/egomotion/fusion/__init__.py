"""Motion encoder and asymmetric cross-attention fusion of visual and motion tokens."""

from .attention import ROPE_BASE, gelu, rope_rotate, softmax
from .check import CHECK_DIMS, CheckResult, finite_difference_grads, gradient_errors, run_checks
from .gru import encode_segment, segment_features
from .model import build_motion_tokens, fuse_layer1, fuse_layer2, fusion_forward, fusion_grad, record_segments
from .params import (
    FusionDims,
    FusionError,
    FusionParams,
    TokenMatrix,
    init_params,
    load_params,
    param_shapes,
    save_params,
    zero_params,
)

__all__ = [
    "ROPE_BASE",
    "CHECK_DIMS",
    "CheckResult",
    "FusionDims",
    "FusionError",
    "FusionParams",
    "TokenMatrix",
    "build_motion_tokens",
    "encode_segment",
    "finite_difference_grads",
    "fuse_layer1",
    "fuse_layer2",
    "fusion_forward",
    "fusion_grad",
    "gelu",
    "gradient_errors",
    "init_params",
    "load_params",
    "param_shapes",
    "record_segments",
    "rope_rotate",
    "run_checks",
    "save_params",
    "segment_features",
    "softmax",
    "zero_params",
]
