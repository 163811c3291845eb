"""Burst super-resolution with query-gated state-space scan kernels.

Library layout: ``tensor_ops`` (dense primitives), ``ssm`` (discretization,
scan, oracle, backward), ``qssm`` (query-gated burst fusion block),
``msfm`` (three-branch fusion), ``adaup`` (adaptive upsampling),
``pipeline`` (full model, alignment, weights), ``synthburst`` (synthetic
RAW bursts and PNG IO), ``metrics`` (PSNR/SSIM reports), ``checks`` and
``bench`` (verification and timing surfaces behind the CLI).
"""

from .errors import (
    BurstSrError,
    HeaderError,
    ImageFormatError,
    PayloadError,
    ShapeError,
    ValidationError,
    WeightFormatError,
    WeightValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "BurstSrError",
    "HeaderError",
    "ImageFormatError",
    "PayloadError",
    "ShapeError",
    "ValidationError",
    "WeightFormatError",
    "WeightValidationError",
    "__version__",
]
