"""Query-gated state-space block for burst fusion.

The base frame is first re-fused with all current frames (channel concat +
per-pixel MLP), then its tokens generate the step sizes and input-control
vectors of a state-space scan whose drive comes from the merged current
frames. The scan runs in four spatial orders; outputs are summed in a fixed
order, mixed by a channel-attention gate, and added back onto the base
frame (residual).

Gate semantics of the scan: a token whose generated step size is near zero
contributes (almost) nothing to the state and lets history pass through; a
token with a large step size is absorbed and resets history. The base
frame therefore decides, position by position, which merged current-frame
tokens are visible to the output.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor_ops as T
from .errors import ShapeError, ValidationError
from .ssm import default_state_matrix, selective_scan, zoh_discretize

DIRECTIONS = ("row-fwd", "row-bwd", "col-fwd", "col-bwd")

# epsilon inside the parameter-free RMS pre-normalization of the query path
_PRENORM_EPS = 1e-6


@dataclass
class BurstFeatures:
    """Feature maps of one burst: frame 0 separated out as the base."""

    base: np.ndarray      # [C_feat, H, W]
    currents: np.ndarray  # [N-1, C_feat, H, W]

    def validate(self) -> None:
        if self.base.ndim != 3 or self.currents.ndim != 4:
            raise ShapeError(f"expected base [C,H,W], currents [N-1,C,H,W]; got {self.base.shape}, {self.currents.shape}")
        if self.currents.shape[0] < 1:
            raise ValidationError("a burst needs at least 2 frames (one current frame)")
        if self.currents.shape[1:] != self.base.shape:
            raise ShapeError(f"current frames {self.currents.shape[1:]} do not match base {self.base.shape}")

    @property
    def n_frames(self) -> int:
        return self.currents.shape[0] + 1


@dataclass
class QssmBlockWeights:
    """All learnable tensors of one block plus the fixed state matrix."""

    fuse_w1: np.ndarray      # [2C, N*C]
    fuse_b1: np.ndarray      # [2C]
    fuse_w2: np.ndarray      # [C, 2C]
    fuse_b2: np.ndarray      # [C]
    merge_weight: np.ndarray  # [C, (N-1)*C]
    x_weight: np.ndarray     # [C, C]
    delta_weight: np.ndarray  # [C, C]
    delta_bias: np.ndarray   # [C]
    b_weight: np.ndarray     # [C*D, C]
    b_bias: np.ndarray       # [C*D]
    c_readout: np.ndarray    # [C, D]
    d_skip: np.ndarray       # [C]
    ca_w1: np.ndarray        # [C//r, C]
    ca_b1: np.ndarray        # [C//r]
    ca_w2: np.ndarray        # [C, C//r]
    ca_b2: np.ndarray        # [C]
    out_weight: np.ndarray   # [C, C]
    out_bias: np.ndarray     # [C]
    a_diag: np.ndarray       # [C, D], fixed, strictly negative

    @property
    def c_feat(self) -> int:
        return self.c_readout.shape[0]

    @property
    def d_state(self) -> int:
        return self.c_readout.shape[1]

    @classmethod
    def shapes(cls, n_frames: int, c_feat: int, d_state: int, reduction: int = 4) -> dict[str, tuple]:
        red = max(c_feat // reduction, 1)
        return {
            "fuse_w1": (2 * c_feat, n_frames * c_feat),
            "fuse_b1": (2 * c_feat,),
            "fuse_w2": (c_feat, 2 * c_feat),
            "fuse_b2": (c_feat,),
            "merge_weight": (c_feat, (n_frames - 1) * c_feat),
            "x_weight": (c_feat, c_feat),
            "delta_weight": (c_feat, c_feat),
            "delta_bias": (c_feat,),
            "b_weight": (c_feat * d_state, c_feat),
            "b_bias": (c_feat * d_state,),
            "c_readout": (c_feat, d_state),
            "d_skip": (c_feat,),
            "ca_w1": (red, c_feat),
            "ca_b1": (red,),
            "ca_w2": (c_feat, red),
            "ca_b2": (c_feat,),
            "out_weight": (c_feat, c_feat),
            "out_bias": (c_feat,),
            "a_diag": (c_feat, d_state),
        }

    @classmethod
    def zeros(cls, n_frames: int, c_feat: int, d_state: int) -> "QssmBlockWeights":
        """All-zero learnable weights; the block then acts as the identity."""
        vals = {k: np.zeros(s) for k, s in cls.shapes(n_frames, c_feat, d_state).items()}
        vals["a_diag"] = default_state_matrix(c_feat, d_state)
        return cls(**vals)

    @classmethod
    def random(cls, rng: np.random.Generator, n_frames: int, c_feat: int, d_state: int) -> "QssmBlockWeights":
        """Small random init: stable scan, moderate step sizes."""
        vals = {}
        for k, s in cls.shapes(n_frames, c_feat, d_state).items():
            fan_in = s[-1] if len(s) > 1 else 1
            vals[k] = rng.normal(scale=1.0 / np.sqrt(fan_in), size=s)
        vals["delta_bias"] = np.full(c_feat, -3.0)  # softplus(-3) ~ 0.049
        vals["d_skip"] = np.ones(c_feat)
        vals["a_diag"] = default_state_matrix(c_feat, d_state)
        return cls(**vals)

    def to_flat(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_flat(cls, tensors: dict[str, np.ndarray], prefix: str) -> "QssmBlockWeights":
        return cls(**{f.name: tensors[f"{prefix}.{f.name}"] for f in fields(cls)})


def _pixelwise_linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Apply a channel-mixing linear map at every pixel of [C, H, W]."""
    if x.shape[0] != weight.shape[1]:
        raise ShapeError(f"channel mismatch: input has {x.shape[0]}, weight expects {weight.shape[1]}")
    y = np.tensordot(weight, x, axes=([1], [0]))
    if bias is not None:
        y = y + bias[:, None, None]
    return y


def query_prenorm(x: np.ndarray) -> np.ndarray:
    """Parameter-free RMS normalization over channels, per pixel.

    Applied to the query path only (the re-fused base) before the token
    projections; the current-frame drive is deliberately left unnormalized
    so its noise statistics survive to the scan input.
    """
    rms = np.sqrt(np.mean(x * x, axis=0, keepdims=True) + _PRENORM_EPS)
    return x / rms


def fuse_base(base: np.ndarray, currents: np.ndarray, weights: QssmBlockWeights) -> np.ndarray:
    """Concatenate base with all currents and re-project to a new base.

    Channel concat (base first, then frames in burst order) feeds a
    per-pixel MLP with one hidden layer of width 2*C_feat and a GELU,
    projected back to C_feat channels.
    """
    feats = BurstFeatures(base=base, currents=currents)
    feats.validate()
    stack = np.concatenate([base[None], currents], axis=0)
    z = stack.reshape(-1, base.shape[1], base.shape[2])
    hidden = T.gelu(_pixelwise_linear(z, weights.fuse_w1, weights.fuse_b1))
    return _pixelwise_linear(hidden, weights.fuse_w2, weights.fuse_b2)


def merge_currents(currents: np.ndarray, weights: QssmBlockWeights) -> np.ndarray:
    """Project the channel-concatenated current frames to one merged stream."""
    if currents.ndim != 4:
        raise ShapeError(f"currents must be [N-1,C,H,W], got shape {currents.shape}")
    if currents.shape[0] < 1:
        raise ValidationError("a burst needs at least 2 frames (one current frame)")
    z = currents.reshape(-1, currents.shape[2], currents.shape[3])
    return _pixelwise_linear(z, weights.merge_weight)


def query_params(tokens: np.ndarray, weights: QssmBlockWeights) -> tuple[np.ndarray, np.ndarray]:
    """Generate per-token (delta, B) from base tokens.

    delta goes through softplus so it is strictly positive; B is reshaped
    to [L, C_feat, D_state].
    """
    if tokens.ndim != 2:
        raise ShapeError(f"tokens must be [L, C_feat], got shape {tokens.shape}")
    delta = T.softplus(T.linear(tokens, weights.delta_weight, weights.delta_bias))
    b_seq = T.linear(tokens, weights.b_weight, weights.b_bias)
    return delta, b_seq.reshape(tokens.shape[0], weights.c_feat, weights.d_state)


def flatten_tokens(img: np.ndarray, direction: str) -> np.ndarray:
    """Serialize [C, H, W] into [H*W, C] tokens along the given scan order."""
    if direction == "row-fwd":
        return img.reshape(img.shape[0], -1).T.copy()
    if direction == "row-bwd":
        return flatten_tokens(img[:, :, ::-1], "row-fwd")
    if direction == "col-fwd":
        return img.transpose(0, 2, 1).reshape(img.shape[0], -1).T.copy()
    if direction == "col-bwd":
        return flatten_tokens(img[:, ::-1, :], "col-fwd")
    raise ValidationError(f"unknown scan direction {direction!r}, expected one of {DIRECTIONS}")


def unflatten_tokens(tokens: np.ndarray, direction: str, h: int, w: int) -> np.ndarray:
    """Inverse of :func:`flatten_tokens` for the same direction."""
    if direction == "row-fwd":
        return np.ascontiguousarray(tokens.T.reshape(-1, h, w))
    if direction == "row-bwd":
        return np.ascontiguousarray(unflatten_tokens(tokens, "row-fwd", h, w)[:, :, ::-1])
    if direction == "col-fwd":
        return np.ascontiguousarray(tokens.T.reshape(-1, w, h).transpose(0, 2, 1))
    if direction == "col-bwd":
        return np.ascontiguousarray(unflatten_tokens(tokens, "col-fwd", h, w)[:, ::-1, :])
    raise ValidationError(f"unknown scan direction {direction!r}, expected one of {DIRECTIONS}")


def qssm_scan_direction(
    new_base: np.ndarray,
    merged: np.ndarray,
    weights: QssmBlockWeights,
    direction: str,
) -> np.ndarray:
    """Run the query-gated scan along one spatial order.

    Base tokens generate (delta, B); merged tokens pass through a linear
    layer to become the drive. The recurrence itself is the shared
    selective scan; the result is de-serialized with the inverse of the
    same direction map.
    """
    if new_base.shape != merged.shape:
        raise ShapeError(f"base features {new_base.shape} and merged features {merged.shape} disagree")
    _, h, w = new_base.shape
    base_tokens = flatten_tokens(new_base, direction)
    cur_tokens = flatten_tokens(merged, direction)
    x_cur = T.linear(cur_tokens, weights.x_weight)
    delta, b_seq = query_params(base_tokens, weights)
    disc = zoh_discretize(weights.a_diag, b_seq, delta)
    y, _ = selective_scan(disc, weights.c_readout, weights.d_skip, x_cur)
    return unflatten_tokens(y, direction, h, w)


def channel_attention(x: np.ndarray, weights: QssmBlockWeights) -> np.ndarray:
    """Squeeze-excite gate: global pool, two-layer MLP, sigmoid rescale."""
    pooled = T.adaptive_avg_pool_1x1(x)[:, 0, 0]
    hidden = np.maximum(T.linear(pooled, weights.ca_w1, weights.ca_b1), 0.0)
    gate = T.sigmoid(T.linear(hidden, weights.ca_w2, weights.ca_b2))
    return x * gate[:, None, None]


def qssm_block(features: BurstFeatures, weights: QssmBlockWeights) -> np.ndarray:
    """Full residual block: fuse, merge, scan in four orders, gate, add.

    The four direction outputs are summed in the fixed order row-fwd,
    row-bwd, col-fwd, col-bwd. The query path is RMS-normalized before the
    token projections; the residual connection adds the raw base back.
    """
    features.validate()
    new_base = fuse_base(features.base, features.currents, weights)
    merged = merge_currents(features.currents, weights)
    query = query_prenorm(new_base)
    y = qssm_scan_direction(query, merged, weights, DIRECTIONS[0])
    for direction in DIRECTIONS[1:]:
        y = y + qssm_scan_direction(query, merged, weights, direction)
    y = channel_attention(_pixelwise_linear(y, weights.out_weight, weights.out_bias), weights)
    return features.base + y
