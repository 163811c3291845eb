"""Deterministic synthetic RAW-burst generation.

A clean HR RGB image is turned into an N-frame low-resolution burst:
per frame, sample the HR grid at a random sub-pixel translation, area
downsample, linearize with inverse gamma, Bayer-mosaic into packed RGGB
planes, and add heteroscedastic (read + shot) Gaussian noise. Frame 0 is
the base frame and always uses zero shift.

Shifts are stored in the pixel units of the frames as stored (packed RAW
pixels for raw4, RGB pixels for rgb3); one stored pixel spans 2*s HR
pixels in raw4 mode and s HR pixels in rgb3 mode.

Randomness comes from numpy's PCG64 via ``default_rng([seed, frame_index])``
so frames are independently reproducible and the whole burst is a pure
function of (image, parameters, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import tensor_ops as T
from .errors import ImageFormatError, ShapeError, ValidationError

GAMMA = 2.2

_RB_KERNEL = np.array([[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]])
_G_KERNEL = np.array([[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]])


@dataclass
class NoiseParams:
    sigma_read: float = 0.0
    sigma_shot: float = 0.0

    def validate(self) -> None:
        if self.sigma_read < 0 or self.sigma_shot < 0:
            raise ValidationError(f"noise stds must be non-negative, got {self.sigma_read}, {self.sigma_shot}")


@dataclass
class BurstStack:
    frames: np.ndarray             # [N, C, h, w]
    shifts: list[tuple[float, float]]  # per frame (dy, dx), frame 0 = (0, 0)
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.frames.ndim != 4:
            raise ShapeError(f"frames must be [N,C,h,w], got shape {self.frames.shape}")
        if self.frames.shape[0] < 2:
            raise ValidationError("a burst needs at least 2 frames")
        if len(self.shifts) != self.frames.shape[0]:
            raise ShapeError(f"{len(self.shifts)} shifts for {self.frames.shape[0]} frames")
        if tuple(self.shifts[0]) != (0.0, 0.0):
            raise ValidationError(f"base frame shift must be (0, 0), got {self.shifts[0]}")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def mosaic(rgb: np.ndarray) -> np.ndarray:
    """RGGB mosaic + pack: [3, 2h, 2w] -> [4, h, w], channel order R, G1, G2, B."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ShapeError(f"expected [3,H,W], got shape {rgb.shape}")
    if rgb.shape[1] % 2 or rgb.shape[2] % 2:
        raise ShapeError(f"spatial dims must be even, got {rgb.shape[1]}x{rgb.shape[2]}")
    return np.stack(
        [
            rgb[0, 0::2, 0::2],
            rgb[1, 0::2, 1::2],
            rgb[1, 1::2, 0::2],
            rgb[2, 1::2, 1::2],
        ]
    )


def demosaic_bilinear(packed: np.ndarray) -> np.ndarray:
    """Bilinear demosaic of packed RGGB planes: [4, h, w] -> [3, 2h, 2w].

    Sampled sites pass through exactly; missing sites are the mean of their
    available same-color neighbors (mask-normalized, so borders average
    whatever neighbors exist).
    """
    if packed.ndim != 3 or packed.shape[0] != 4:
        raise ShapeError(f"expected [4,h,w], got shape {packed.shape}")
    h, w = packed.shape[1], packed.shape[2]
    hh, ww = 2 * h, 2 * w

    sites = {
        "r": (slice(0, hh, 2), slice(0, ww, 2)),
        "g1": (slice(0, hh, 2), slice(1, ww, 2)),
        "g2": (slice(1, hh, 2), slice(0, ww, 2)),
        "b": (slice(1, hh, 2), slice(1, ww, 2)),
    }

    def fill(values: dict[str, np.ndarray], kernel: np.ndarray) -> np.ndarray:
        plane = np.zeros((hh, ww))
        mask = np.zeros((hh, ww))
        for key, vals in values.items():
            plane[sites[key]] = vals
            mask[sites[key]] = 1.0
        num = T.conv2d(plane[None], kernel[None, None], stride=1, padding=1)[0]
        den = T.conv2d(mask[None], kernel[None, None], stride=1, padding=1)[0]
        out = num / den
        for key, vals in values.items():
            out[sites[key]] = vals  # sampled sites are exact by construction
        return out

    red = fill({"r": packed[0]}, _RB_KERNEL)
    green = fill({"g1": packed[1], "g2": packed[2]}, _G_KERNEL)
    blue = fill({"b": packed[3]}, _RB_KERNEL)
    return np.stack([red, green, blue])


def shift_sample_bilinear(img: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Resample [C, H, W] at grid + (dy, dx), bilinear, edge-clamped."""
    c, h, w = img.shape
    ys = np.arange(h, dtype=np.float64) + dy
    xs = np.arange(w, dtype=np.float64) + dx
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = (ys - y0)[None, :, None]
    fx = (xs - x0)[None, None, :]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = (1 - fx) * img[:, y0c][:, :, x0c] + fx * img[:, y0c][:, :, x1c]
    bot = (1 - fx) * img[:, y1c][:, :, x0c] + fx * img[:, y1c][:, :, x1c]
    return (1 - fy) * top + fy * bot


def area_downsample(img: np.ndarray, s: int) -> np.ndarray:
    """Block-mean downsample [C, H, W] -> [C, H/s, W/s]; preserves the mean."""
    c, h, w = img.shape
    if s == 1:
        return img.copy()
    if h % s or w % s:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by {s}")
    return img.reshape(c, h // s, s, w // s, s).mean(axis=(2, 4))


def generate_burst(
    hr: np.ndarray,
    n_frames: int,
    s: int,
    noise: NoiseParams,
    max_shift: float,
    seed: int,
    input_mode: str = "raw4",
    gamma: bool = True,
) -> tuple[BurstStack, np.ndarray]:
    """Degrade one HR image into a burst plus its ground truth.

    Returns (BurstStack, gt) where gt is the untouched HR image. Fully
    determined by ``seed``; frame i uses the substream ``[seed, i]``.
    """
    hr = np.asarray(hr, dtype=np.float64)
    noise.validate()
    if hr.ndim != 3 or hr.shape[0] != 3:
        raise ShapeError(f"hr must be [3,H,W], got shape {hr.shape}")
    if n_frames < 2:
        raise ValidationError(f"a burst needs at least 2 frames, got {n_frames}")
    if s < 1:
        raise ValidationError(f"scale must be >= 1, got {s}")
    if input_mode not in ("raw4", "rgb3"):
        raise ValidationError(f"input_mode must be 'raw4' or 'rgb3', got {input_mode!r}")
    if max_shift < 0:
        raise ValidationError(f"max_shift must be non-negative, got {max_shift}")
    divisor = 2 * s if input_mode == "raw4" else s
    if hr.shape[1] % divisor or hr.shape[2] % divisor:
        raise ValidationError(f"hr dims {hr.shape[1]}x{hr.shape[2]} must be divisible by {divisor}")
    if hr.min() < -1e-12 or hr.max() > 1 + 1e-12:
        raise ValidationError("hr values must lie in [0, 1]")

    hr_per_stored_px = float(divisor)  # one stored pixel spans this many HR pixels
    frames = []
    shifts: list[tuple[float, float]] = []
    for i in range(n_frames):
        rng = np.random.default_rng([seed, i])
        if i == 0:
            dy = dx = 0.0
        else:
            dy, dx = (float(v) for v in rng.uniform(-max_shift, max_shift, size=2))
        shifts.append((dy, dx))
        shifted = shift_sample_bilinear(hr, dy * hr_per_stored_px, dx * hr_per_stored_px)
        lr = area_downsample(shifted, s)
        lin = np.power(lr, GAMMA) if gamma else lr
        frame = mosaic(lin) if input_mode == "raw4" else lin
        if noise.sigma_read > 0 or noise.sigma_shot > 0:
            std = np.sqrt(noise.sigma_read**2 + noise.sigma_shot**2 * frame)
            frame = frame + rng.normal(size=frame.shape) * std
        frames.append(np.clip(frame, 0.0, 1.0))

    stack = BurstStack(
        frames=np.stack(frames),
        shifts=shifts,
        meta={
            "scale": s,
            "sigma_read": noise.sigma_read,
            "sigma_shot": noise.sigma_shot,
            "rng_seed": seed,
            "input_mode": input_mode,
            "max_shift": max_shift,
            "gamma": gamma,
        },
    )
    return stack, hr.copy()


def save_image(tensor: np.ndarray, path: str | Path, bit_depth: int = 16) -> None:
    """Write [C, H, W] (C in 1/3/4) or [H, W] values in [0, 1] as a PNG.

    Values are clipped to [0, 1] and quantized to the 8- or 16-bit grid;
    anything already on the grid round-trips exactly.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if tensor.ndim == 2:
        tensor = tensor[None]
    if tensor.ndim != 3 or tensor.shape[0] not in (1, 3, 4):
        raise ImageFormatError(f"cannot save tensor of shape {tensor.shape} as PNG")
    if bit_depth not in (8, 16):
        raise ImageFormatError(f"bit_depth must be 8 or 16, got {bit_depth}")
    levels = (1 << bit_depth) - 1
    q = np.rint(np.clip(tensor, 0.0, 1.0) * levels)
    arr = q.astype(np.uint8 if bit_depth == 8 else np.uint16)
    if arr.shape[0] == 1:
        img = arr[0]
    elif arr.shape[0] == 3:
        img = arr[::-1].transpose(1, 2, 0)  # RGB -> BGR
    else:
        img = arr[[2, 1, 0, 3]].transpose(1, 2, 0)  # treat as RGBA -> BGRA
    if not cv2.imwrite(str(path), img):
        raise ImageFormatError(f"failed to write PNG to {path}")


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG back into [C, H, W] float64 values in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ImageFormatError(f"{path}: not a readable image file")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageFormatError(f"{path}: unsupported sample type {img.dtype}")
    arr = img.astype(np.float64) / scale
    if arr.ndim == 2:
        return arr[None]
    if arr.shape[2] == 3:
        return arr.transpose(2, 0, 1)[::-1].copy()  # BGR -> RGB
    if arr.shape[2] == 4:
        return arr.transpose(2, 0, 1)[[2, 1, 0, 3]].copy()  # BGRA -> RGBA
    raise ImageFormatError(f"{path}: unsupported channel count {arr.shape[2]}")


def save_burst(stack: BurstStack, gt: np.ndarray, out_dir: str | Path, name: str) -> Path:
    """Write frame PNGs, the ground truth, and a manifest; returns the manifest path."""
    stack.validate()
    out = Path(out_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    frame_files = []
    for i in range(stack.n_frames):
        fname = f"frame_{i:02d}.png"
        save_image(stack.frames[i], out / fname, bit_depth=16)
        frame_files.append(fname)
    save_image(gt, out / "gt.png", bit_depth=16)
    manifest = {
        "name": name,
        "frames": frame_files,
        "gt": "gt.png",
        "shifts": [list(sh) for sh in stack.shifts],
        "meta": stack.meta,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest_path


def load_burst(manifest_path: str | Path) -> tuple[BurstStack, np.ndarray]:
    """Read a burst written by :func:`save_burst`."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ImageFormatError(f"{manifest_path}: unreadable manifest: {exc}") from exc
    base = manifest_path.parent
    frames = np.stack([load_image(base / f) for f in manifest["frames"]])
    gt = load_image(base / manifest["gt"])
    stack = BurstStack(
        frames=frames,
        shifts=[tuple(sh) for sh in manifest["shifts"]],
        meta=manifest.get("meta", {}),
    )
    stack.validate()
    return stack, gt
