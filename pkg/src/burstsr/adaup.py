"""Adaptive upsampling: transposed-conv kernels modulated per input.

Each x2 stage pools its own input into a per-channel descriptor L, maps it
through a 1x1 projection to an output-channel descriptor L1, rescales the
stage's base 3x3 kernel by both descriptors, and applies a stride-2
transposed convolution. The transposed conv uses padding 1 with
output-padding 1 semantics, realized bit-exactly as the zero-padding
transposed conv cropped by one row/column at the top and left, so an
[C, H, W] input becomes exactly [C_out, 2H, 2W].

Larger power-of-two factors cascade x2 stages, each stage re-perceiving
its descriptors from its own input. No bias anywhere, so the whole map is
linear in the input once the descriptors are held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .errors import ShapeError, ValidationError

__all__ = [
    "AdaUpStage",
    "AdaUpWeights",
    "perceive_distribution",
    "channel_interact",
    "modulate_kernel",
    "transposed_conv_x2",
    "upsample_stage",
    "adaup_forward",
    "baseline_upsample",
]


@dataclass
class AdaUpStage:
    kernel: np.ndarray   # [C_in, C_out, 3, 3]
    l1_proj: np.ndarray  # [C_out, C_in]

    def validate(self) -> None:
        if self.kernel.ndim != 4 or self.kernel.shape[2:] != (3, 3):
            raise ShapeError(f"stage kernel must be [C_in,C_out,3,3], got shape {self.kernel.shape}")
        if self.l1_proj.shape != (self.kernel.shape[1], self.kernel.shape[0]):
            raise ShapeError(f"l1_proj shape {self.l1_proj.shape} inconsistent with kernel {self.kernel.shape}")


@dataclass
class AdaUpWeights:
    stages: list[AdaUpStage]

    @classmethod
    def random(cls, rng: np.random.Generator, c_feat: int, n_stages: int) -> "AdaUpWeights":
        stages = [
            AdaUpStage(
                kernel=rng.normal(scale=1.0 / (3.0 * np.sqrt(c_feat)), size=(c_feat, c_feat, 3, 3)),
                l1_proj=rng.normal(scale=1.0 / np.sqrt(c_feat), size=(c_feat, c_feat)),
            )
            for _ in range(n_stages)
        ]
        return cls(stages=stages)


def perceive_distribution(x: np.ndarray) -> np.ndarray:
    """Per-channel distribution descriptor; mean pooling to [C, 1, 1]."""
    return T.adaptive_avg_pool_1x1(x)


def channel_interact(l: np.ndarray, l1_proj: np.ndarray) -> np.ndarray:
    """Map the input descriptor across channels: [C_in,1,1] -> [C_out,1,1], no bias."""
    if l.shape != (l1_proj.shape[1], 1, 1):
        raise ShapeError(f"descriptor shape {l.shape} != ({l1_proj.shape[1]}, 1, 1)")
    return (l1_proj @ l[:, 0, 0])[:, None, None]


def modulate_kernel(kernel: np.ndarray, l: np.ndarray, l1: np.ndarray) -> np.ndarray:
    """Rescale the kernel: W_f[i, o, :, :] = W[i, o, :, :] * L[i] * L1[o]."""
    l = np.asarray(l, dtype=np.float64).reshape(-1)
    l1 = np.asarray(l1, dtype=np.float64).reshape(-1)
    if kernel.shape[0] != l.size or kernel.shape[1] != l1.size:
        raise ShapeError(f"kernel {kernel.shape} incompatible with descriptors ({l.size}, {l1.size})")
    return kernel * l[:, None, None, None] * l1[None, :, None, None]


def transposed_conv_x2(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Static x2 stage: stride-2 transposed conv, padding-1/output-padding-1.

    Equivalent to the unpadded transposed conv (output 2H+1 x 2W+1) with the
    first row and column dropped.
    """
    full = T.conv_transpose2d(x, kernel, stride=2, padding=0)
    return np.ascontiguousarray(full[:, 1:, 1:])


def upsample_stage(x: np.ndarray, stage: AdaUpStage, override: tuple | None = None) -> np.ndarray:
    """One adaptive x2 stage; ``override=(L, L1)`` bypasses the perception."""
    stage.validate()
    if override is None:
        l = perceive_distribution(x)
        l1 = channel_interact(l, stage.l1_proj)
    else:
        l, l1 = override
    return transposed_conv_x2(x, modulate_kernel(stage.kernel, l, l1))


def adaup_forward(x: np.ndarray, weights: AdaUpWeights, s: int, override: str | list | None = None) -> np.ndarray:
    """Cascade of log2(s) adaptive stages.

    ``override`` is None for the live path, the string ``"ones"`` to force
    L = L1 = 1 in every stage (the static reduction), or a list of per-stage
    (L, L1) pairs for fixed-descriptor evaluation.
    """
    if s < 1 or (s & (s - 1)) != 0:
        raise ValidationError(f"scale must be a power of 2, got {s}")
    n_stages = s.bit_length() - 1
    if len(weights.stages) != n_stages:
        raise ShapeError(f"scale {s} needs {n_stages} stages, weights have {len(weights.stages)}")
    for i, stage in enumerate(weights.stages):
        if override is None:
            ov = None
        elif override == "ones":
            c_in, c_out = stage.kernel.shape[0], stage.kernel.shape[1]
            ov = (np.ones((c_in, 1, 1)), np.ones((c_out, 1, 1)))
        else:
            ov = override[i]
        x = upsample_stage(x, stage, override=ov)
    return x


def _bilinear_matrix(n: int, s: int) -> np.ndarray:
    """1-D align-corners-false interpolation matrix [s*n, n], edge-clamped."""
    m = np.zeros((n * s, n))
    for o in range(n * s):
        pos = (o + 0.5) / s - 0.5
        lo = int(np.floor(pos))
        frac = pos - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        m[o, lo_c] += 1.0 - frac
        m[o, hi_c] += frac
    return m


def bilinear_upsample(x: np.ndarray, s: int) -> np.ndarray:
    """Separable bilinear resize by integer factor, align-corners-false."""
    if x.ndim != 3:
        raise ShapeError(f"expected [C,H,W], got shape {x.shape}")
    if s < 1:
        raise ValidationError(f"scale must be >= 1, got {s}")
    if s == 1:
        return x.copy()
    wh = _bilinear_matrix(x.shape[1], s)
    ww = _bilinear_matrix(x.shape[2], s)
    return np.einsum("pi,ciq,qj->cpj", wh, x, ww.T, optimize=True)


def baseline_upsample(x: np.ndarray, mode: str, s: int, conv_kernel: np.ndarray | None = None) -> np.ndarray:
    """Static comparison upsamplers.

    ``pixel_shuffle_conv``: convolve to C*s*s channels (or, with no kernel
    given, require the input to carry them already, the identity
    arrangement) and rearrange depth to space. ``bilinear``: separable
    interpolation, align-corners-false.
    """
    if mode == "bilinear":
        return bilinear_upsample(x, s)
    if mode == "pixel_shuffle_conv":
        if conv_kernel is not None:
            k = conv_kernel.shape[2]
            x = T.conv2d(x, conv_kernel, stride=1, padding=k // 2)
        return T.pixel_shuffle(x, s)
    raise ValidationError(f"unknown baseline mode {mode!r}, expected 'pixel_shuffle_conv' or 'bilinear'")
