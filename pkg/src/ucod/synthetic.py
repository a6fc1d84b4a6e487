"""Seeded synthetic camouflage corpus.

Each image is a smooth procedural texture; the object is a blob of the same
texture family with slightly shifted colour and grain, covering 1-20% of the
image (log-uniform, so small objects are common). Ground truth is kept for evaluation only.
"""
from __future__ import annotations

import os

import numpy as np
from PIL import Image
from scipy import ndimage

from .backbone import ImageTensor


def _texture(rng, size, base, amplitude, grain):
    noise = rng.standard_normal((size, size, 3))
    shared = rng.standard_normal((size, size, 1))
    field = ndimage.gaussian_filter(0.5 * noise + shared, sigma=(grain, grain, 0))
    field /= field.std() + 1e-12
    return base + amplitude * field


def _blob(rng, size, area_frac):
    """Irregular blob with approximately ``area_frac`` of the image area."""
    target = max(int(round(area_frac * size * size)), 4)
    radius = np.sqrt(target / np.pi)
    cy = rng.uniform(radius + 1, size - radius - 1)
    cx = rng.uniform(radius + 1, size - radius - 1)
    yy, xx = np.mgrid[0:size, 0:size]
    angle = np.arctan2(yy - cy, xx - cx)
    wobble = 1.0
    for k in (2, 3, 5):
        wobble = wobble + rng.uniform(0.0, 0.15) * np.cos(k * angle + rng.uniform(0, 2 * np.pi))
    dist = np.hypot(yy - cy, xx - cx) / wobble
    # choose the radius threshold that hits the target area exactly
    order = np.sort(dist.ravel())
    return dist <= order[target - 1]


def make_sample(seed: int, size: int = 64, area_range=(0.01, 0.20),
                contrast=(0.12, 0.20)) -> tuple[ImageTensor, np.ndarray]:
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.3, 0.7, size=3)
    grain = rng.uniform(1.0, 1.5)
    bg = _texture(rng, size, base, 0.04, grain)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    offset = rng.uniform(*contrast) * direction
    fg = _texture(rng, size, base + offset, 0.04, grain * 0.6)
    gt = _blob(rng, size, np.exp(rng.uniform(*np.log(area_range))))
    pixels = np.where(gt[..., None], fg, bg)
    pixels = np.clip(pixels, 0.0, 1.0)
    return ImageTensor(pixels, f"synth_{seed:05d}"), gt


def make_corpus(n: int, size: int = 64, seed: int = 0, **kwargs) -> list[tuple[ImageTensor, np.ndarray]]:
    return [make_sample(seed * 100003 + i, size, **kwargs) for i in range(n)]


def write_corpus(root: str, n: int, size: int = 64, seed: int = 0) -> list[str]:
    """Write images to ``root/*.png`` and masks to ``root/gt/*.png``; returns the stems."""
    os.makedirs(os.path.join(root, "gt"), exist_ok=True)
    stems = []
    for image, gt in make_corpus(n, size, seed):
        stem = image.source_id
        Image.fromarray(np.round(image.pixels * 255).astype(np.uint8), "RGB").save(
            os.path.join(root, f"{stem}.png"))
        Image.fromarray(gt.astype(np.uint8) * 255, "L").save(os.path.join(root, "gt", f"{stem}.png"))
        stems.append(stem)
    return stems
