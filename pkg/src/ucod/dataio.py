"""Dataset directories and mask files.

A dataset directory holds RGB images; an optional ``gt/`` subdirectory holds
same-stem grayscale masks (>= 128 is foreground). Training code only ever
sees :class:`ImageSet`; ground truth is loaded separately by
:func:`load_eval_pairs` so the training path has no way to reach it.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backbone import ImageTensor
from .errors import InputError
from .masks import mask_to_uint8
from .metrics import EvalPair

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
GT_DIR = "gt"
GT_THRESHOLD = 128
LT_SUFFIX = ".lt"


@dataclass
class ImageSet:
    """Unlabeled images in lexicographic filename order."""

    images: list[ImageTensor] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [img.source_id for img in self.images]


def _image_files(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise InputError(f"not a directory: {directory}")
    return sorted(f for f in os.listdir(directory)
                  if f.lower().endswith(IMAGE_EXTENSIONS) and os.path.isfile(os.path.join(directory, f)))


def read_image(path: str) -> ImageTensor:
    try:
        with Image.open(path) as im:
            pixels = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"cannot read image {path}: {exc}") from None
    return ImageTensor(pixels, os.path.splitext(os.path.basename(path))[0])


def read_mask(path: str) -> np.ndarray:
    """Grayscale mask as floats in [0, 1]."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from None


def read_gt(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L")) >= GT_THRESHOLD
    except (OSError, UnidentifiedImageError) as exc:
        raise InputError(f"cannot read mask {path}: {exc}") from None


def write_mask(path: str, values: np.ndarray) -> None:
    Image.fromarray(mask_to_uint8(values), "L").save(path)


def load_images(directory: str) -> ImageSet:
    """Read every image in ``directory``; unreadable files are skipped and recorded."""
    result = ImageSet()
    files = _image_files(directory)
    if not files:
        log.warning("no images found in %s", directory)
    for fname in files:
        path = os.path.join(directory, fname)
        try:
            result.images.append(read_image(path))
        except InputError as exc:
            log.warning("skipping %s: %s", path, exc)
            result.skipped.append({"path": path, "reason": str(exc)})
    return result


def _by_stem(directory: str, suffix: str = "") -> dict[str, str]:
    out = {}
    for fname in _image_files(directory):
        stem = os.path.splitext(fname)[0]
        if suffix:
            if not stem.endswith(suffix):
                continue
            stem = stem[:-len(suffix)]
        elif stem.endswith(LT_SUFFIX):
            continue  # refined masks are selected with suffix=".lt"
        out[stem] = os.path.join(directory, fname)
    return out


def load_eval_pairs(pred_dir: str, gt_dir: str, pred_suffix: str = "") -> list[EvalPair]:
    """Pair ``pred_dir/<stem><suffix>.png`` with ``gt_dir/<stem>.*``.

    Any stem present on only one side is an input error listing the names.
    """
    preds = _by_stem(pred_dir, pred_suffix)
    gts = _by_stem(gt_dir)
    missing_gt = sorted(set(preds) - set(gts))
    missing_pred = sorted(set(gts) - set(preds))
    if missing_gt or missing_pred:
        parts = []
        if missing_gt:
            parts.append(f"no ground truth for: {', '.join(missing_gt)}")
        if missing_pred:
            parts.append(f"no prediction for: {', '.join(missing_pred)}")
        raise InputError("; ".join(parts))
    if not preds:
        raise InputError(f"no predictions found in {pred_dir}")
    pairs = []
    for stem in sorted(preds):
        pred, gt = read_mask(preds[stem]), read_gt(gts[stem])
        if pred.shape != gt.shape:
            raise InputError(f"{stem}: prediction {pred.shape} and ground truth {gt.shape} differ in size")
        pairs.append(EvalPair(pred, gt, stem))
    return pairs


def load_dataset_pairs(directory: str, predict) -> list[EvalPair]:
    """Evaluation mode over a dataset directory: every image needs ``gt/<stem>``.

    ``predict`` maps an :class:`ImageTensor` to a mask at image resolution.
    """
    images = load_images(directory)
    gt_dir = os.path.join(directory, GT_DIR)
    gts = _by_stem(gt_dir) if os.path.isdir(gt_dir) else {}
    pairs = []
    for img in images.images:
        if img.source_id not in gts:
            raise InputError(f"no ground truth for image {img.source_id} in {gt_dir}")
        pred = predict(img)
        pairs.append(EvalPair(getattr(pred, "values", pred), read_gt(gts[img.source_id]), img.source_id))
    return pairs
