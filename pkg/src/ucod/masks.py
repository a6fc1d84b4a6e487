"""Soft masks and the resizing helpers used by every stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InputError

PATCH_GRID = "patch_grid"
IMAGE = "image"


@dataclass
class SoftMask:
    """2-D array of probabilities in [0, 1].

    ``resolution_tag`` records whether the mask lives on the backbone patch
    grid or at image resolution. ``meta`` carries per-result flags such as
    ``degenerate`` or the Look-Twice region list.
    """

    values: np.ndarray
    resolution_tag: str = PATCH_GRID
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InputError(f"mask must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("mask contains non-finite values")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise InputError("mask values must lie in [0, 1]")
        if self.resolution_tag not in (PATCH_GRID, IMAGE):
            raise InputError(f"unknown resolution tag {self.resolution_tag!r}")
        self.values = values

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def resize_array(arr: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize of a (h, w) or (h, w, C) array with aligned corners.

    Corner alignment means the first and last rows/columns of input and
    output coincide, so a resize to the same size is the identity and a
    2-sample ramp [0, 1] resized to 4 samples gives [0, 1/3, 2/3, 1].
    """
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise InputError(f"target size must be positive, got {size}")
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape[:2] == (h, w):
        return arr.copy()
    t = torch.from_numpy(np.ascontiguousarray(arr))
    if arr.ndim == 2:
        t = t[None, None]
    elif arr.ndim == 3:
        t = t.permute(2, 0, 1)[None]
    else:
        raise InputError(f"cannot resize array of shape {arr.shape}")
    out = F.interpolate(t, size=(h, w), mode="bilinear", align_corners=True)
    if arr.ndim == 2:
        return out[0, 0].numpy()
    return out[0].permute(1, 2, 0).numpy()


def resize_tensor(t: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Torch counterpart of :func:`resize_array` for (B, h, w) batches."""
    if tuple(t.shape[-2:]) == tuple(size):
        return t
    return F.interpolate(t.unsqueeze(1), size=tuple(size), mode="bilinear",
                         align_corners=True).squeeze(1)


def upsample_mask(mask: SoftMask, target: tuple[int, int]) -> SoftMask:
    """Bilinear upsampling of a patch-grid mask to image resolution."""
    values = np.clip(resize_array(mask.values, target), 0.0, 1.0)
    return SoftMask(values, IMAGE, dict(mask.meta))


def mask_to_uint8(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)
