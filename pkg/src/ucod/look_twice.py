"""Look-Twice: find small foreground components, zoom in, re-infer and paste back."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .backbone import ImageTensor
from .masks import IMAGE, SoftMask, resize_array

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.15

_STRUCTURES = {
    8: np.ones((3, 3), dtype=bool),
    4: ndimage.generate_binary_structure(2, 1),
}


@dataclass
class ComponentRegion:
    pixels: np.ndarray  # (K, 2) row, col
    bbox: tuple[int, int, int, int]  # top, left, height, width
    fg_sum: float
    r: float
    s_fg: float
    s_bg: float
    scale: float = 0.0

    def as_dict(self) -> dict:
        return {"bbox": list(self.bbox), "n_pixels": int(len(self.pixels)), "fg_sum": self.fg_sum,
                "r": self.r, "s_fg": self.s_fg, "s_bg": self.s_bg, "scale": self.scale}


def _values(mask) -> np.ndarray:
    return mask.values if isinstance(mask, SoftMask) else np.asarray(mask, dtype=np.float64)


def connected_components(mask, threshold: float = 0.5, connectivity: int = 8) -> list[ComponentRegion]:
    """Components of ``mask >= threshold`` with their area ratios.

    Regions come back in label order (row-major position of their first
    pixel). ``fg_sum`` sums the soft values, not the binarised ones.
    """
    values = _values(mask)
    h, w = values.shape
    labels, count = ndimage.label(values >= threshold, structure=_STRUCTURES[connectivity])
    regions = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        rows, cols = np.nonzero(labels[sl] == k)
        rows, cols = rows + sl[0].start, cols + sl[1].start
        top, left = sl[0].start, sl[1].start
        bh, bw = sl[0].stop - top, sl[1].stop - left
        fg_sum = float(values[rows, cols].sum())
        region = ComponentRegion(
            pixels=np.stack([rows, cols], axis=1), bbox=(top, left, bh, bw), fg_sum=fg_sum,
            r=fg_sum / (h * w), s_fg=fg_sum / (bh * bw), s_bg=(bh * bw) / (h * w))
        region.scale = expansion_scale(region)
        regions.append(region)
    return regions


def expansion_scale(region: ComponentRegion) -> float:
    """1 - s_fg / s_bg, clamped to [0, 1]. Small dense regions clamp to 0."""
    raw = 1.0 - region.s_fg / region.s_bg
    return float(min(max(raw, 0.0), 1.0))


def expanded_bbox(region: ComponentRegion, shape: tuple[int, int],
                  scale: float | None = None) -> tuple[int, int, int, int]:
    """Grow the bbox by ``scale / 2`` of its own size on each side, clipped to the image."""
    if scale is None:
        scale = region.scale
    top, left, bh, bw = region.bbox
    pad_h = int(np.floor(scale * bh / 2.0 + 0.5))
    pad_w = int(np.floor(scale * bw / 2.0 + 0.5))
    y0, x0 = max(top - pad_h, 0), max(left - pad_w, 0)
    y1, x1 = min(top + bh + pad_h, shape[0]), min(left + bw + pad_w, shape[1])
    return y0, x0, y1 - y0, x1 - x0


def small_regions(coarse, tau: float = DEFAULT_TAU, threshold: float = 0.5) -> list[ComponentRegion]:
    """Regions with r < tau, largest r first (stable for equal r)."""
    regions = [c for c in connected_components(coarse, threshold) if c.r < tau]
    return sorted(regions, key=lambda c: -c.r)


def _crop(image: ImageTensor, box, input_size) -> ImageTensor:
    y0, x0, bh, bw = box
    crop = image.pixels[y0:y0 + bh, x0:x0 + bw]
    crop = np.clip(resize_array(crop, input_size), 0.0, 1.0)
    return ImageTensor(crop, f"{image.source_id}@{y0},{x0},{bh},{bw}")


def refine(image: ImageTensor, coarse, model: Callable[[ImageTensor], SoftMask],
           tau: float = DEFAULT_TAU, input_size: tuple[int, int] | None = None,
           threshold: float = 0.5) -> SoftMask:
    """Re-infer every small region on a zoomed crop and paste the result.

    ``model`` maps an image of ``input_size`` to an image-resolution mask.
    Only pixels inside expanded small-region boxes can change. Pastes happen
    in descending-r order, so later boxes win where they overlap.
    """
    values = _values(coarse)
    if input_size is None:
        input_size = image.size
    out = values.copy()
    regions_meta, failed = [], []
    for idx, region in enumerate(small_regions(values, tau, threshold)):
        box = expanded_bbox(region, values.shape)
        y0, x0, bh, bw = box
        meta = region.as_dict()
        meta["expanded_bbox"] = list(box)
        try:
            pred = model(_crop(image, box, input_size))
            pred_values = _values(pred)
            patch = np.clip(resize_array(pred_values, (bh, bw)), 0.0, 1.0)
        except Exception as exc:  # one bad region must not sink the image
            log.warning("look-twice: region %d of %s failed: %s", idx, image.source_id, exc)
            failed.append(idx)
            meta["failed"] = True
            regions_meta.append(meta)
            continue
        out[y0:y0 + bh, x0:x0 + bw] = patch
        regions_meta.append(meta)
    return SoftMask(out, IMAGE, {"regions": regions_meta, "failed": failed, "tau": tau})


def emit_training_patches(image: ImageTensor, coarse, tau: float = DEFAULT_TAU,
                          input_size: tuple[int, int] | None = None,
                          threshold: float = 0.5) -> list[ImageTensor]:
    """Zoomed crops of every small region, used as extra training images."""
    values = _values(coarse)
    if input_size is None:
        input_size = image.size
    return [_crop(image, expanded_bbox(region, values.shape), input_size)
            for region in small_regions(values, tau, threshold)]
