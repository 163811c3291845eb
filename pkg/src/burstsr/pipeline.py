"""Full burst super-resolution forward pass and weight management.

Stage order: integer alignment (outside ``forward``), a shared shallow 3x3
conv per frame, a stack of query-scan blocks that keep refining the base
features against the fixed current-frame features, residual multi-scale
fusion blocks on the fused base, adaptive upsampling by the configured
scale, and a 3x3 head conv to RGB. A bilinear-upsampled rendering of the
raw base frame is added as a global skip so an untrained network still
produces a sane image.

The output spatial size is exactly ``scale`` times the stored input frame
size (packed RAW frames in raw4 mode are half the mosaic resolution, so
the ground-truth HR image is 2x larger than the raw4 output).

Weights live in a flat name -> float64 array mapping persisted in the
QMBW container; :func:`weight_spec` is the single source of truth for
names and shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .adaup import AdaUpStage, AdaUpWeights, adaup_forward, bilinear_upsample
from .errors import ShapeError, ValidationError, WeightValidationError
from .msfm import MsfmWeights, msfm_forward
from .qssm import BurstFeatures, QssmBlockWeights, qssm_block
from .synthburst import BurstStack, demosaic_bilinear
from .weights_io import load_tensors, save_tensors

ModelWeights = dict[str, np.ndarray]


@dataclass
class ModelConfig:
    burst_size: int = 14
    scale: int = 4
    c_feat: int = 32
    d_state: int = 16
    num_qssm_blocks: int = 2
    num_msfm_blocks: int = 2
    input_mode: str = "raw4"

    def __post_init__(self) -> None:
        if self.burst_size < 2:
            raise ValidationError(f"burst_size must be >= 2, got {self.burst_size}")
        if self.scale not in (2, 4):
            raise ValidationError(f"scale must be 2 or 4, got {self.scale}")
        if min(self.c_feat, self.d_state, self.num_qssm_blocks, self.num_msfm_blocks) < 1:
            raise ValidationError("all model dimensions must be positive")
        if self.input_mode not in ("raw4", "rgb3"):
            raise ValidationError(f"input_mode must be 'raw4' or 'rgb3', got {self.input_mode!r}")

    @property
    def frame_channels(self) -> int:
        return 4 if self.input_mode == "raw4" else 3

    @property
    def n_up_stages(self) -> int:
        return self.scale.bit_length() - 1


def weight_spec(config: ModelConfig) -> dict[str, tuple]:
    """Every tensor name the config declares, with its shape."""
    c = config.c_feat
    spec: dict[str, tuple] = {
        "shallow.weight": (c, config.frame_channels, 3, 3),
        "shallow.bias": (c,),
    }
    for i in range(config.num_qssm_blocks):
        for name, shape in QssmBlockWeights.shapes(config.burst_size, c, config.d_state).items():
            spec[f"qssm.{i}.{name}"] = shape
    for i in range(config.num_msfm_blocks):
        for name, shape in MsfmWeights.shapes(c, config.d_state).items():
            spec[f"msfm.{i}.{name}"] = shape
    for j in range(config.n_up_stages):
        spec[f"adaup.{j}.kernel"] = (c, c, 3, 3)
        spec[f"adaup.{j}.l1_proj"] = (c, c)
    spec["head.weight"] = (3, c, 3, 3)
    spec["head.bias"] = (3,)
    return spec


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Seeded random initialization matching :func:`weight_spec` exactly."""
    rng = np.random.default_rng([seed, 0xBEEF])
    weights: ModelWeights = {}
    spec = weight_spec(config)
    weights["shallow.weight"] = rng.normal(scale=0.05, size=spec["shallow.weight"])
    weights["shallow.bias"] = np.zeros(spec["shallow.bias"])
    for i in range(config.num_qssm_blocks):
        block = QssmBlockWeights.random(rng, config.burst_size, config.c_feat, config.d_state)
        weights.update(block.to_flat(f"qssm.{i}"))
    for i in range(config.num_msfm_blocks):
        block = MsfmWeights.random(rng, config.c_feat, config.d_state)
        weights.update(block.to_flat(f"msfm.{i}"))
    up = AdaUpWeights.random(rng, config.c_feat, config.n_up_stages)
    for j, stage in enumerate(up.stages):
        weights[f"adaup.{j}.kernel"] = stage.kernel
        weights[f"adaup.{j}.l1_proj"] = stage.l1_proj
    weights["head.weight"] = rng.normal(scale=0.05, size=spec["head.weight"])
    weights["head.bias"] = np.zeros(spec["head.bias"])
    return weights


def validate_weights(weights: ModelWeights, config: ModelConfig) -> None:
    """Check the flat mapping against the config's declared spec.

    Raises WeightValidationError naming the first offending tensor (or the
    expected/found counts when the name sets differ).
    """
    spec = weight_spec(config)
    missing = [n for n in spec if n not in weights]
    extra = [n for n in weights if n not in spec]
    if missing or extra:
        parts = [f"expected {len(spec)} tensors, found {len(weights)}"]
        if missing:
            parts.append(f"first missing: {missing[0]!r}")
        if extra:
            parts.append(f"first unexpected: {extra[0]!r}")
        raise WeightValidationError("; ".join(parts))
    for name, shape in spec.items():
        got = tuple(weights[name].shape)
        if got != tuple(shape):
            raise WeightValidationError(f"tensor {name!r} has shape {got}, config declares {tuple(shape)}")


def save_weights(weights: ModelWeights, path) -> None:
    save_tensors(weights, path)


def load_weights(path) -> ModelWeights:
    return load_tensors(path)


def config_from_weights(weights: ModelWeights) -> ModelConfig:
    """Reconstruct the model config a weight file was built for.

    Every config field is derivable from tensor shapes and name counts;
    the result is re-validated against the full spec so an internally
    inconsistent file fails with the offending tensor named.
    """
    try:
        c_feat, frame_ch = weights["shallow.weight"].shape[:2]
        burst_size = weights["qssm.0.fuse_w1"].shape[1] // c_feat
        d_state = weights["qssm.0.c_readout"].shape[1]
    except KeyError as exc:
        raise WeightValidationError(f"cannot derive model config: missing tensor {exc.args[0]!r}") from exc
    num_qssm = len({n.split(".")[1] for n in weights if n.startswith("qssm.")})
    num_msfm = len({n.split(".")[1] for n in weights if n.startswith("msfm.")})
    n_stages = len({n.split(".")[1] for n in weights if n.startswith("adaup.")})
    config = ModelConfig(
        burst_size=burst_size,
        scale=1 << n_stages,
        c_feat=c_feat,
        d_state=d_state,
        num_qssm_blocks=num_qssm,
        num_msfm_blocks=num_msfm,
        input_mode="raw4" if frame_ch == 4 else "rgb3",
    )
    validate_weights(weights, config)
    return config


def translate_int(frame: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Move content by (dy, dx) pixels with zero fill: out[y, x] = in[y-dy, x-dx]."""
    c, h, w = frame.shape
    out = np.zeros_like(frame)
    ys = slice(max(dy, 0), min(h + dy, h))
    xs = slice(max(dx, 0), min(w + dx, w))
    ys_src = slice(max(-dy, 0), min(h - dy, h))
    xs_src = slice(max(-dx, 0), min(w - dx, w))
    out[:, ys, xs] = frame[:, ys_src, xs_src]
    return out


def estimate_shift(base: np.ndarray, frame: np.ndarray) -> tuple[float, float]:
    """Whole-frame translation estimate by phase correlation on channel means.

    Returns (dy, dx) in this package's convention: frame(y, x) is the base
    content sampled at (y + dy, x + dx).
    """
    a = base.mean(axis=0)
    b = frame.mean(axis=0)
    fa = np.fft.fft2(a)
    fb = np.fft.fft2(b)
    cross = fa * np.conj(fb)
    mag = np.abs(cross)
    cross = np.where(mag > 0, cross / np.where(mag > 0, mag, 1.0), 0.0)
    corr = np.fft.ifft2(cross).real
    peak = np.unravel_index(int(np.argmax(corr)), corr.shape)
    h, w = corr.shape
    dy = peak[0] - h if peak[0] > h // 2 else peak[0]
    dx = peak[1] - w if peak[1] > w // 2 else peak[1]
    return float(dy), float(dx)


def align(burst: BurstStack, shifts: list[tuple[float, float]] | None = None) -> BurstStack:
    """Undo per-frame translations by the rounded shift, zero-filling borders.

    With ``shifts`` given (the generator's ground truth), the integer part
    of each shift is inverted and the sub-pixel residual is left in place.
    Without, shifts are estimated from frame 0 by phase correlation.
    """
    burst.validate()
    n, _, h, w = burst.frames.shape
    if shifts is None:
        shifts = [(0.0, 0.0)] + [estimate_shift(burst.frames[0], burst.frames[i]) for i in range(1, n)]
    if len(shifts) != n:
        raise ShapeError(f"{len(shifts)} shifts for {n} frames")
    aligned = np.empty_like(burst.frames)
    for i, (dy, dx) in enumerate(shifts):
        r, c = int(round(dy)), int(round(dx))
        if abs(r) >= h or abs(c) >= w:
            raise ValidationError(f"frame {i} shift ({dy}, {dx}) exceeds frame size {h}x{w}")
        # frame(y, x) = scene(y + dy, x + dx) => scene(y, x) ~ frame(y - dy, x - dx)
        aligned[i] = translate_int(burst.frames[i], r, c) if (r or c) else burst.frames[i]
    return BurstStack(frames=aligned, shifts=[(0.0, 0.0)] * n, meta=dict(burst.meta))


def _conv_bias(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return T.conv2d(x, weight, stride=1, padding=1) + bias[:, None, None]


def _adaup_weights(weights: ModelWeights, config: ModelConfig) -> AdaUpWeights:
    stages = [
        AdaUpStage(kernel=weights[f"adaup.{j}.kernel"], l1_proj=weights[f"adaup.{j}.l1_proj"])
        for j in range(config.n_up_stages)
    ]
    return AdaUpWeights(stages=stages)


def global_skip(base_frame: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Bilinear rendering of the raw base frame at the output resolution."""
    if config.input_mode == "raw4":
        rgb = demosaic_bilinear(base_frame)
        factor = config.scale // 2
    else:
        rgb = base_frame
        factor = config.scale
    return bilinear_upsample(rgb, factor) if factor > 1 else rgb


def forward(burst: BurstStack, weights: ModelWeights, config: ModelConfig) -> np.ndarray:
    """Run the network on an (already aligned) burst.

    Returns an RGB image of shape [3, scale*h, scale*w] for stored frames
    of shape [C, h, w]. Pure function: identical inputs give bit-identical
    outputs.
    """
    burst.validate()
    n, ch, h, w = burst.frames.shape
    if n != config.burst_size:
        raise ValidationError(f"burst has {n} frames, config declares {config.burst_size}")
    if ch != config.frame_channels:
        raise ValidationError(f"frames have {ch} channels, {config.input_mode} needs {config.frame_channels}")
    validate_weights(weights, config)

    shallow_w = weights["shallow.weight"]
    shallow_b = weights["shallow.bias"]
    feats = np.stack([_conv_bias(burst.frames[i], shallow_w, shallow_b) for i in range(n)])

    base = feats[0]
    currents = feats[1:]
    for i in range(config.num_qssm_blocks):
        block = QssmBlockWeights.from_flat(weights, f"qssm.{i}")
        base = qssm_block(BurstFeatures(base=base, currents=currents), block)

    x = base
    for i in range(config.num_msfm_blocks):
        block = MsfmWeights.from_flat(weights, f"msfm.{i}")
        x = x + msfm_forward(x, block)

    up = adaup_forward(x, _adaup_weights(weights, config), config.scale)
    out = _conv_bias(up, weights["head.weight"], weights["head.bias"])
    return out + global_skip(burst.frames[0], config)
