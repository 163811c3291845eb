"""Multi-scale fusion: conv, axis scans, and channel attention, blended.

Three branches see the same input and their outputs are combined as

    y = w1 * conv(x) + w2 * ssm(x) + w3 * attn(x)

with stored scalar balance factors. The conv branch is a shape-preserving
3x3 convolution. The scan branch runs a self-conditioned selective scan
(the input drives both the gate projections and the drive) independently
along every row and every column, summing the two orientations, so each
row/column is its own sequence. The attention branch is single-head
attention whose tokens are channels and whose features are the flattened
spatial positions.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor_ops as T
from .errors import ShapeError
from .ssm import default_state_matrix, selective_scan, zoh_discretize

__all__ = ["MsfmWeights", "conv_branch", "ssm_branch", "transformer_branch", "msfm_forward"]


@dataclass
class MsfmWeights:
    conv_kernel: np.ndarray   # [C, C, 3, 3]
    delta_weight: np.ndarray  # [C, C]
    delta_bias: np.ndarray    # [C]
    b_weight: np.ndarray      # [C*D, C]
    b_bias: np.ndarray        # [C*D]
    c_readout: np.ndarray     # [C, D]
    d_skip: np.ndarray        # [C]
    a_diag: np.ndarray        # [C, D], fixed, strictly negative
    attn_wq: np.ndarray       # [C, C]
    attn_wk: np.ndarray       # [C, C]
    attn_wv: np.ndarray       # [C, C]
    attn_wo: np.ndarray       # [C, C]
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0

    @property
    def c_feat(self) -> int:
        return self.c_readout.shape[0]

    @property
    def d_state(self) -> int:
        return self.c_readout.shape[1]

    @classmethod
    def shapes(cls, c_feat: int, d_state: int) -> dict[str, tuple]:
        return {
            "conv_kernel": (c_feat, c_feat, 3, 3),
            "delta_weight": (c_feat, c_feat),
            "delta_bias": (c_feat,),
            "b_weight": (c_feat * d_state, c_feat),
            "b_bias": (c_feat * d_state,),
            "c_readout": (c_feat, d_state),
            "d_skip": (c_feat,),
            "a_diag": (c_feat, d_state),
            "attn_wq": (c_feat, c_feat),
            "attn_wk": (c_feat, c_feat),
            "attn_wv": (c_feat, c_feat),
            "attn_wo": (c_feat, c_feat),
            "w1": (),
            "w2": (),
            "w3": (),
        }

    @classmethod
    def zeros(cls, c_feat: int, d_state: int) -> "MsfmWeights":
        vals = {k: np.zeros(s) for k, s in cls.shapes(c_feat, d_state).items() if k not in ("w1", "w2", "w3")}
        vals["a_diag"] = default_state_matrix(c_feat, d_state)
        return cls(w1=0.0, w2=0.0, w3=0.0, **vals)

    @classmethod
    def random(cls, rng: np.random.Generator, c_feat: int, d_state: int) -> "MsfmWeights":
        vals = {}
        for k, s in cls.shapes(c_feat, d_state).items():
            if k in ("w1", "w2", "w3"):
                continue
            fan_in = int(np.prod(s[1:])) if len(s) > 1 else 1
            vals[k] = rng.normal(scale=1.0 / np.sqrt(max(fan_in, 1)), size=s)
        vals["delta_bias"] = np.full(c_feat, -3.0)
        vals["d_skip"] = np.ones(c_feat)
        vals["a_diag"] = default_state_matrix(c_feat, d_state)
        return cls(w1=1.0, w2=1.0, w3=1.0, **vals)

    def to_flat(self, prefix: str) -> dict[str, np.ndarray]:
        return {f"{prefix}.{f.name}": np.asarray(getattr(self, f.name), dtype=np.float64) for f in fields(self)}

    @classmethod
    def from_flat(cls, tensors: dict[str, np.ndarray], prefix: str) -> "MsfmWeights":
        vals = {}
        for f in fields(cls):
            arr = tensors[f"{prefix}.{f.name}"]
            vals[f.name] = float(arr) if f.name in ("w1", "w2", "w3") else arr
        return cls(**vals)


def conv_branch(x: np.ndarray, weights: MsfmWeights) -> np.ndarray:
    """Local fusion: 3x3 convolution, stride 1, padding 1 (shape-preserving)."""
    return T.conv2d(x, weights.conv_kernel, stride=1, padding=1)


def _self_scan(tokens: np.ndarray, weights: MsfmWeights) -> np.ndarray:
    delta = T.softplus(T.linear(tokens, weights.delta_weight, weights.delta_bias))
    b_seq = T.linear(tokens, weights.b_weight, weights.b_bias).reshape(
        tokens.shape[0], weights.c_feat, weights.d_state
    )
    disc = zoh_discretize(weights.a_diag, b_seq, delta)
    y, _ = selective_scan(disc, weights.c_readout, weights.d_skip, tokens)
    return y


def ssm_branch(x: np.ndarray, weights: MsfmWeights) -> np.ndarray:
    """Axis-aligned self-conditioned scans: every row and every column is an
    independent sequence; the two orientation results are summed."""
    if x.ndim != 3:
        raise ShapeError(f"expected [C,H,W], got shape {x.shape}")
    c, h, w = x.shape
    out_h = np.empty_like(x)
    for r in range(h):
        out_h[:, r, :] = _self_scan(x[:, r, :].T, weights).T
    out_v = np.empty_like(x)
    for col in range(w):
        out_v[:, :, col] = _self_scan(x[:, :, col].T, weights).T
    return out_h + out_v


def transformer_branch(x: np.ndarray, weights: MsfmWeights) -> np.ndarray:
    """Single-head attention across channels.

    Tokens are the C channels, features are the H*W flattened positions;
    scores are scaled by 1/sqrt(H*W) and softmaxed over the key channels.
    """
    if x.ndim != 3:
        raise ShapeError(f"expected [C,H,W], got shape {x.shape}")
    c, h, w = x.shape
    flat = x.reshape(c, h * w)
    q = weights.attn_wq @ flat
    k = weights.attn_wk @ flat
    v = weights.attn_wv @ flat
    scores = (q @ k.T) / np.sqrt(h * w)
    scores -= scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=1, keepdims=True)
    return (weights.attn_wo @ (attn @ v)).reshape(c, h, w)


def msfm_forward(x: np.ndarray, weights: MsfmWeights) -> np.ndarray:
    """Weighted three-branch sum, evaluated in the fixed order conv, ssm, attn."""
    return (
        weights.w1 * conv_branch(x, weights)
        + weights.w2 * ssm_branch(x, weights)
        + weights.w3 * transformer_branch(x, weights)
    )
