"""Reference-based image quality: PSNR, SSIM, linear-domain PSNR, reports.

PSNR of identical images is reported as +infinity and serialized as the
string "inf" (JSON has no infinity literal). SSIM uses the canonical
constants: 11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03,
dynamic range 1.0, Rec.601 luma for RGB inputs, and averages over valid
window positions only.

Linear-domain PSNR maps both gamma-domain inputs through x^2.2 before
PSNR. That definition is provisional: it is one defensible reading of
"PSNR in a linearized intensity domain" and is documented as such.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
_LUMA = np.array([0.299, 0.587, 0.114])
CSV_HEADER = "id,psnr_db,ssim,lpsnr_db"


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """10 * log10(max_val^2 / MSE); +inf when the images are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if max_val <= 0:
        raise ShapeError(f"max_val must be positive, got {max_val}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 3 and img.shape[0] == 3:
        return np.tensordot(_LUMA, img, axes=([0], [0]))
    raise ShapeError(f"ssim expects [H,W], [1,H,W] or [3,H,W], got shape {img.shape}")


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over valid 11x11 window positions, range 1.0."""
    ga = _to_gray(np.asarray(a, dtype=np.float64))
    gb = _to_gray(np.asarray(b, dtype=np.float64))
    if ga.shape != gb.shape:
        raise ShapeError(f"image shapes differ: {ga.shape} vs {gb.shape}")
    if ga.shape[0] < SSIM_WINDOW or ga.shape[1] < SSIM_WINDOW:
        raise ShapeError(f"image {ga.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window")

    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    def local_mean(img):
        views = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.tensordot(views, win, axes=([2, 3], [0, 1]))

    mu_a = local_mean(ga)
    mu_b = local_mean(gb)
    var_a = local_mean(ga * ga) - mu_a * mu_a
    var_b = local_mean(gb * gb) - mu_b * mu_b
    cov = local_mean(ga * gb) - mu_a * mu_b
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def linear_psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR after mapping both gamma-domain inputs through x^2.2 (provisional)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return psnr(np.power(np.clip(a, 0.0, None), 2.2), np.power(np.clip(b, 0.0, None), 2.2), 1.0)


@dataclass
class ImageScore:
    id: str
    psnr_db: float
    ssim: float
    lpsnr_db: float | None = None


@dataclass
class EvalReport:
    per_image: list[ImageScore]
    aggregate: dict

    @classmethod
    def from_scores(cls, scores: list[ImageScore]) -> "EvalReport":
        if not scores:
            raise ShapeError("cannot aggregate an empty score list")
        aggregate = {
            "mean_psnr": float(np.mean([s.psnr_db for s in scores])),
            "mean_ssim": float(np.mean([s.ssim for s in scores])),
            "count": len(scores),
        }
        return cls(per_image=scores, aggregate=aggregate)


def score_pair(image_id: str, pred: np.ndarray, gt: np.ndarray, with_lpsnr: bool = True) -> ImageScore:
    return ImageScore(
        id=image_id,
        psnr_db=psnr(pred, gt, 1.0),
        ssim=ssim(pred, gt),
        lpsnr_db=linear_psnr(pred, gt) if with_lpsnr else None,
    )


def _json_num(v: float | None):
    if v is None:
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def report_to_json(report: EvalReport) -> str:
    doc = {
        "per_image": [
            {"id": s.id, "psnr_db": _json_num(s.psnr_db), "ssim": _json_num(s.ssim), "lpsnr_db": _json_num(s.lpsnr_db)}
            for s in report.per_image
        ],
        "aggregate": {
            "mean_psnr": _json_num(report.aggregate["mean_psnr"]),
            "mean_ssim": _json_num(report.aggregate["mean_ssim"]),
            "count": report.aggregate["count"],
        },
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _csv_num(v: float | None) -> str:
    if v is None:
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def report_to_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for s in report.per_image:
        writer.writerow([s.id, _csv_num(s.psnr_db), _csv_num(s.ssim), _csv_num(s.lpsnr_db)])
    return buf.getvalue()
