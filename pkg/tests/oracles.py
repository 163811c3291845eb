"""Independent loop references used only by the tests.

Nothing in here is imported by the package itself: every function is a
deliberately naive re-derivation (nested loops, explicit index formulas,
explicit summation) of an operation under test.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_loop(x: np.ndarray, kernel: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Direct six-nested-loop cross-correlation."""
    c_out, c_in, kh, kw = kernel.shape
    h, w = x.shape[1], x.shape[2]
    xp = np.zeros((c_in, h + 2 * padding, w + 2 * padding))
    xp[:, padding : padding + h, padding : padding + w] = x
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, h_out, w_out))
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                acc = 0.0
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            acc += xp[c, i * stride + u, j * stride + v] * kernel[o, c, u, v]
                out[o, i, j] = acc
    return out


def conv_transpose2d_loop(x: np.ndarray, kernel: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Scatter-style transposed convolution, one contribution at a time."""
    c_in, c_out, kh, kw = kernel.shape
    h, w = x.shape[1], x.shape[2]
    h_full = (h - 1) * stride + kh
    w_full = (w - 1) * stride + kw
    out = np.zeros((c_out, h_full, w_full))
    for ci in range(c_in):
        for i in range(h):
            for j in range(w):
                for co in range(c_out):
                    for u in range(kh):
                        for v in range(kw):
                            out[co, i * stride + u, j * stride + v] += x[ci, i, j] * kernel[ci, co, u, v]
    return out[:, padding : h_full - padding, padding : w_full - padding]


def linear_loop(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    """Explicit dot-product loop over the last axis."""
    lead = x.shape[:-1]
    f_out, f_in = weight.shape
    flat = x.reshape(-1, f_in)
    out = np.zeros((flat.shape[0], f_out))
    for r in range(flat.shape[0]):
        for o in range(f_out):
            acc = 0.0
            for i in range(f_in):
                acc += flat[r, i] * weight[o, i]
            if bias is not None:
                acc += bias[o]
            out[r, o] = acc
    return out.reshape(lead + (f_out,))


def mean_pool_loop(x: np.ndarray) -> np.ndarray:
    """Summation-based channel mean, [C, H, W] -> [C, 1, 1]."""
    c, h, w = x.shape
    out = np.zeros((c, 1, 1))
    for ch in range(c):
        acc = 0.0
        for i in range(h):
            for j in range(w):
                acc += x[ch, i, j]
        out[ch, 0, 0] = acc / (h * w)
    return out


def pixel_shuffle_index(x: np.ndarray, s: int) -> np.ndarray:
    """Index-formula depth-to-space rearrangement."""
    c_full, h, w = x.shape
    c = c_full // (s * s)
    out = np.zeros((c, h * s, w * s))
    for ch in range(c):
        for i in range(s):
            for j in range(s):
                for y in range(h):
                    for z in range(w):
                        out[ch, y * s + i, z * s + j] = x[ch * s * s + i * s + j, y, z]
    return out


def dot_sum(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product by explicit compensated summation."""
    assert a.size == b.size, f"inner product size mismatch: {a.shape} vs {b.shape}"
    return math.fsum(float(p) * float(q) for p, q in zip(a.reshape(-1), b.reshape(-1)))


def channel_attention_compose(x, w1, b1, w2, b2):
    """Squeeze / two-layer MLP / sigmoid gate, recomposed step by step."""
    c = x.shape[0]
    pooled = np.array([x[ch].sum() / x[ch].size for ch in range(c)])
    hidden = np.maximum(w1 @ pooled + b1, 0.0)
    gate = 1.0 / (1.0 + np.exp(-(w2 @ hidden + b2)))
    return x * gate[:, None, None]


def channel_attention_loop_scores(q, k, scale):
    """Explicit softmax attention scores across channel tokens."""
    c = q.shape[0]
    scores = np.zeros((c, c))
    for i in range(c):
        for j in range(c):
            scores[i, j] = np.dot(q[i], k[j]) * scale
    out = np.zeros_like(scores)
    for i in range(c):
        row = scores[i] - scores[i].max()
        e = np.exp(row)
        out[i] = e / e.sum()
    return out


def ssim_windowed_loop(a: np.ndarray, b: np.ndarray, window: np.ndarray, c1: float, c2: float) -> float:
    """Mean local SSIM computed window position by window position."""
    k = window.shape[0]
    h, w = a.shape
    vals = []
    for i in range(h - k + 1):
        for j in range(w - k + 1):
            pa = a[i : i + k, j : j + k]
            pb = b[i : i + k, j : j + k]
            mu_a = float((window * pa).sum())
            mu_b = float((window * pb).sum())
            var_a = float((window * pa * pa).sum()) - mu_a * mu_a
            var_b = float((window * pb * pb).sum()) - mu_b * mu_b
            cov = float((window * pa * pb).sum()) - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def bilinear_1d_halfpixel(row: np.ndarray, s: int) -> np.ndarray:
    """1-D bilinear resize, align-corners-false half-pixel positions."""
    n = row.size
    out = np.zeros(n * s)
    for o in range(n * s):
        pos = (o + 0.5) / s - 0.5
        lo = math.floor(pos)
        frac = pos - lo
        lo_c = min(max(lo, 0), n - 1)
        hi_c = min(max(lo + 1, 0), n - 1)
        out[o] = (1 - frac) * row[lo_c] + frac * row[hi_c]
    return out
