"""Dense-tensor primitives every other module builds on.

Tensors are plain numpy arrays in float64, laid out row-major. float32 is
tolerated on throughput paths (the bench command) but every verification
path runs in float64.

Conventions, fixed here once so the adjoint tests pin the transpose:

* ``conv2d`` is cross-correlation (no kernel flip), zero padding only.
* ``conv_transpose2d`` is the exact adjoint of ``conv2d`` for matching
  ``(stride, padding)``: ``<conv2d(x,k), y> == <x, conv_transpose2d(y,k)>``.
* ``pixel_shuffle`` follows the depth-to-space layout
  ``out[c, h*s+i, w*s+j] = in[c*s*s + i*s + j, h, w]``.

All operations are pure functions; any internal reduction uses a fixed
order, so repeated calls are bit-identical.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from .errors import ShapeError, ValidationError

__all__ = [
    "conv2d",
    "conv_transpose2d",
    "linear",
    "adaptive_avg_pool_1x1",
    "pixel_shuffle",
    "pixel_unshuffle",
    "softplus",
    "sigmoid",
    "gelu",
    "exp",
    "elementwise_mul",
    "elementwise_add",
]


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _require(cond: bool, exc: type, msg: str) -> None:
    if not cond:
        raise exc(msg)


def conv2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation over a [C_in, H, W] map.

    Parameters
    ----------
    x : ndarray, shape [C_in, H, W]
    kernel : ndarray, shape [C_out, C_in, k, k]
        k must be odd.
    stride, padding : int
        Output is [C_out, (H + 2*padding - k)//stride + 1, ...same for W].

    Returns
    -------
    ndarray, shape [C_out, H', W']
    """
    x = _as_f64(x)
    kernel = _as_f64(kernel)
    _require(x.ndim == 3, ShapeError, f"conv2d input must be [C,H,W], got shape {x.shape}")
    _require(kernel.ndim == 4, ShapeError, f"conv2d kernel must be [C_out,C_in,k,k], got shape {kernel.shape}")
    c_out, c_in, kh, kw = kernel.shape
    _require(kh == kw and kh % 2 == 1, ValidationError, f"kernel must be square with odd size, got {kh}x{kw}")
    _require(stride >= 1, ValidationError, f"stride must be >= 1, got {stride}")
    _require(padding >= 0, ValidationError, f"padding must be >= 0, got {padding}")
    _require(
        x.shape[0] == c_in,
        ShapeError,
        f"input has {x.shape[0]} channels but kernel expects {c_in} (input {x.shape}, kernel {kernel.shape})",
    )
    h, w = x.shape[1], x.shape[2]
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    _require(h_out >= 1 and w_out >= 1, ShapeError, f"kernel {kh}x{kw} does not fit padded input {h}x{w}")

    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("ocuv,chwuv->ohw", kernel, windows, optimize=True)


def conv_transpose2d(x: np.ndarray, kernel: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Transposed 2-D convolution; the adjoint of :func:`conv2d`.

    Parameters
    ----------
    x : ndarray, shape [C_in, H, W]
    kernel : ndarray, shape [C_in, C_out, k, k]
        Same memory layout as the matching conv2d kernel: a kernel used by
        conv2d as [C_out, C_in, k, k] is read here with its first axis as
        this operation's input channels.
    stride, padding : int
        Output is [C_out, (H-1)*stride - 2*padding + k, ...same for W].

    Returns
    -------
    ndarray, shape [C_out, H'', W'']
    """
    x = _as_f64(x)
    kernel = _as_f64(kernel)
    _require(x.ndim == 3, ShapeError, f"conv_transpose2d input must be [C,H,W], got shape {x.shape}")
    _require(kernel.ndim == 4, ShapeError, f"conv_transpose2d kernel must be [C_in,C_out,k,k], got shape {kernel.shape}")
    c_in, c_out, kh, kw = kernel.shape
    _require(kh == kw and kh % 2 == 1, ValidationError, f"kernel must be square with odd size, got {kh}x{kw}")
    _require(stride >= 1, ValidationError, f"stride must be >= 1, got {stride}")
    _require(padding >= 0, ValidationError, f"padding must be >= 0, got {padding}")
    _require(
        x.shape[0] == c_in,
        ShapeError,
        f"input has {x.shape[0]} channels but kernel expects {c_in} (input {x.shape}, kernel {kernel.shape})",
    )
    h, w = x.shape[1], x.shape[2]
    h_full = (h - 1) * stride + kh
    w_full = (w - 1) * stride + kw
    _require(
        h_full - 2 * padding >= 1 and w_full - 2 * padding >= 1,
        ShapeError,
        f"padding {padding} leaves no output for input {h}x{w}, kernel {kh}, stride {stride}",
    )

    out = np.zeros((c_out, h_full, w_full))
    h_span = (h - 1) * stride + 1
    w_span = (w - 1) * stride + 1
    for u in range(kh):
        for v in range(kw):
            tap = np.einsum("cij,co->oij", x, kernel[:, :, u, v], optimize=True)
            out[:, u : u + h_span : stride, v : v + w_span : stride] += tap
    if padding:
        out = out[:, padding : h_full - padding, padding : w_full - padding]
    return np.ascontiguousarray(out)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Affine map over the last axis: ``y[..., o] = sum_i x[..., i] w[o, i] + b[o]``."""
    x = _as_f64(x)
    weight = _as_f64(weight)
    _require(weight.ndim == 2, ShapeError, f"weight must be [F_out,F_in], got shape {weight.shape}")
    _require(
        x.shape[-1] == weight.shape[1],
        ShapeError,
        f"input features {x.shape[-1]} do not match weight F_in {weight.shape[1]}",
    )
    y = x @ weight.T
    if bias is not None:
        bias = _as_f64(bias)
        _require(bias.shape == (weight.shape[0],), ShapeError, f"bias shape {bias.shape} != ({weight.shape[0]},)")
        y = y + bias
    return y


def adaptive_avg_pool_1x1(x: np.ndarray) -> np.ndarray:
    """Mean over the spatial axes: [C, H, W] -> [C, 1, 1]."""
    x = _as_f64(x)
    _require(x.ndim == 3, ShapeError, f"expected [C,H,W], got shape {x.shape}")
    _require(x.shape[1] >= 1 and x.shape[2] >= 1, ShapeError, f"empty spatial dims in {x.shape}")
    return x.mean(axis=(1, 2), keepdims=True)


def pixel_shuffle(x: np.ndarray, s: int) -> np.ndarray:
    """Depth-to-space: [C*s*s, H, W] -> [C, s*H, s*W]."""
    x = _as_f64(x)
    _require(x.ndim == 3, ShapeError, f"expected [C,H,W], got shape {x.shape}")
    _require(s >= 1, ValidationError, f"scale must be >= 1, got {s}")
    c_full, h, w = x.shape
    _require(c_full % (s * s) == 0, ShapeError, f"{c_full} channels not divisible by s^2 = {s * s}")
    c = c_full // (s * s)
    return np.ascontiguousarray(x.reshape(c, s, s, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * s, w * s))


def pixel_unshuffle(x: np.ndarray, s: int) -> np.ndarray:
    """Space-to-depth inverse of :func:`pixel_shuffle`."""
    x = _as_f64(x)
    _require(x.ndim == 3, ShapeError, f"expected [C,H,W], got shape {x.shape}")
    _require(s >= 1, ValidationError, f"scale must be >= 1, got {s}")
    c, hs, ws = x.shape
    _require(hs % s == 0 and ws % s == 0, ShapeError, f"spatial dims {hs}x{ws} not divisible by {s}")
    h, w = hs // s, ws // s
    return np.ascontiguousarray(x.reshape(c, h, s, w, s).transpose(0, 2, 4, 1, 3).reshape(c * s * s, h, w))


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), overflow-safe for large positive x."""
    return np.logaddexp(0.0, _as_f64(x))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function, monotone into (0, 1)."""
    return expit(_as_f64(x))


def gelu(x: np.ndarray) -> np.ndarray:
    """Gaussian-error linear unit, exact erf form. Note gelu(x) - gelu(-x) == x."""
    x = _as_f64(x)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def exp(x: np.ndarray) -> np.ndarray:
    return np.exp(_as_f64(x))


def _binary_shapes_ok(a: np.ndarray, b: np.ndarray) -> bool:
    # same shape, or either side scalar
    return a.shape == b.shape or a.shape == () or b.shape == ()


def elementwise_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _as_f64(a), _as_f64(b)
    _require(_binary_shapes_ok(a, b), ShapeError, f"shape mismatch {a.shape} vs {b.shape}")
    return a * b


def elementwise_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _as_f64(a), _as_f64(b)
    _require(_binary_shapes_ok(a, b), ShapeError, f"shape mismatch {a.shape} vs {b.shape}")
    return a + b
