"""Fixed-strategy pseudo-labels: background seed, plus the null and Perlin ablations."""
from __future__ import annotations

import math

import numpy as np

from .backbone import FeatureMap
from .errors import ConfigError, InputError
from .masks import PATCH_GRID, SoftMask, upsample_mask  # noqa: F401  (re-export)

STRATEGIES = ("background-seed", "null", "perlin")
SEED_VARIANT = "feature-cosine"


def cosine_similarity_matrix(features: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``features``; zero vectors score 0."""
    norms = np.linalg.norm(features, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = features / safe[:, None]
    sim = unit @ unit.T
    sim[norms == 0, :] = 0.0
    sim[:, norms == 0] = 0.0
    return sim


def background_seed_label(features: FeatureMap, threshold: float = 0.0) -> SoftMask:
    """Foreground = patches not similar to the most-connected background seed.

    The seed is the patch with the most neighbours whose cosine similarity
    exceeds ``threshold`` (ties go to the lowest row-major index). Every
    patch whose similarity to the seed exceeds ``threshold`` is background,
    the seed included; the remainder is foreground.
    """
    c, n, m = features.data.shape
    if n * m < 2:
        raise InputError("background seed needs at least two patches")
    flat = features.data.reshape(c, n * m).T
    if np.all(flat == flat[0]):
        return SoftMask(np.zeros((n, m)), PATCH_GRID,
                        {"strategy": "background-seed", "variant": SEED_VARIANT, "degenerate": True})
    sim = cosine_similarity_matrix(flat)
    adjacent = sim > threshold
    np.fill_diagonal(adjacent, False)
    degree = adjacent.sum(axis=1)
    seed = int(np.argmax(degree))  # argmax returns the first maximum
    background = sim[seed] > threshold
    background[seed] = True
    fg = (~background).astype(np.float64).reshape(n, m)
    return SoftMask(fg, PATCH_GRID, {"strategy": "background-seed", "variant": SEED_VARIANT,
                                     "degenerate": False, "seed_index": seed})


def null_label(shape: tuple[int, int], value: int = 0) -> SoftMask:
    if value not in (0, 1):
        raise InputError("null label value must be 0 or 1")
    if shape[0] <= 0 or shape[1] <= 0:
        raise InputError(f"grid dims must be positive, got {shape}")
    return SoftMask(np.full(shape, float(value)), PATCH_GRID, {"strategy": "null", "value": value})


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def perlin_noise(shape: tuple[int, int], seed: int) -> np.ndarray:
    """Single-octave 2-D gradient noise sampled at cell centres, normalised to [0, 1]."""
    h, w = shape
    cell_h, cell_w = math.ceil(h / 4), math.ceil(w / 4)
    gh, gw = math.ceil(h / cell_h) + 1, math.ceil(w / cell_w) + 1
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(gh, gw))
    grads = np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    y = (np.arange(h) + 0.5) / cell_h
    x = (np.arange(w) + 0.5) / cell_w
    yy, xx = np.meshgrid(y, x, indexing="ij")
    y0, x0 = np.floor(yy).astype(int), np.floor(xx).astype(int)
    fy, fx = yy - y0, xx - x0

    def corner(dy, dx):
        g = grads[y0 + dy, x0 + dx]
        return g[..., 0] * (fy - dy) + g[..., 1] * (fx - dx)

    u, v = _fade(fx), _fade(fy)
    top = corner(0, 0) * (1 - u) + corner(0, 1) * u
    bottom = corner(1, 0) * (1 - u) + corner(1, 1) * u
    noise = top * (1 - v) + bottom * v
    lo, hi = noise.min(), noise.max()
    if hi - lo <= 0:
        return np.zeros(shape)
    return (noise - lo) / (hi - lo)


def perlin_label(shape: tuple[int, int], seed: int, threshold: float = 0.5) -> SoftMask:
    if shape[0] <= 0 or shape[1] <= 0:
        raise InputError(f"grid dims must be positive, got {shape}")
    if not 0.0 < threshold < 1.0:
        raise InputError("perlin threshold must lie in (0, 1)")
    mask = (perlin_noise(shape, seed) > threshold).astype(np.float64)
    return SoftMask(mask, PATCH_GRID, {"strategy": "perlin", "seed": seed, "threshold": threshold})


def generate_label(strategy: str, features: FeatureMap, *, seed: int = 0,
                   null_value: int = 0, perlin_threshold: float = 0.5,
                   similarity_threshold: float = 0.0) -> SoftMask:
    """Dispatch on strategy name; ``seed`` only matters for Perlin."""
    grid = features.grid
    if strategy == "background-seed":
        return background_seed_label(features, similarity_threshold)
    if strategy == "null":
        return null_label(grid, null_value)
    if strategy == "perlin":
        return perlin_label(grid, seed, perlin_threshold)
    raise ConfigError(f"unknown fixed strategy {strategy!r}; choose from {STRATEGIES}")
