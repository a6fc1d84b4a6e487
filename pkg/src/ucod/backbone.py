"""Frozen patch-feature extraction.

Two backbones are registered:

``toy``
    Hand-crafted per-patch statistics (mean, spread and three fixed filter
    energies per colour channel), centred over the image and mapped through
    a seeded random orthogonal projection. Cheap, deterministic, and keeps
    "similar texture -> similar feature", which is all the pseudo-labelling
    needs.

``pretrained-vit-adapter``
    Reads patch features computed elsewhere (e.g. by a ViT) from
    ``<feature_dir>/<source_id>.feat`` files.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputError

MIN_SIDE = 14
FEAT_MAGIC = b"UCODFEAT"

# 3x3 kernels applied inside each patch (valid mode, no cross-patch support).
_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64) / 4.0
_SOBEL_Y = _SOBEL_X.T.copy()
_LAPLACE = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64) / 4.0
_KERNELS = (_SOBEL_X, _SOBEL_Y, _LAPLACE)
STATS_PER_CHANNEL = 2 + len(_KERNELS)


@dataclass
class ImageTensor:
    pixels: np.ndarray  # (H, W, 3) in [0, 1]
    source_id: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InputError(f"{self.source_id}: expected (H, W, 3) pixels, got {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise InputError(f"{self.source_id}: image {px.shape[:2]} smaller than {MIN_SIDE}x{MIN_SIDE}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise InputError(f"{self.source_id}: pixel values must be finite and in [0, 1]")
        self.pixels = px

    @property
    def size(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass
class FeatureMap:
    data: np.ndarray  # (c, n, m)
    patch_size: int
    source_id: str = ""

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]


@dataclass(frozen=True)
class BackboneConfig:
    name: str = "toy"
    patch_size: int = 14
    channels: int = 16
    seed: int = 0
    gain: float = 8.0
    feature_dir: str | None = None

    def provenance(self) -> str:
        if self.name == "toy":
            return f"toy(patch={self.patch_size}, c={self.channels}, seed={self.seed}, gain={self.gain})"
        return f"pretrained-vit-adapter({self.feature_dir})"


@lru_cache(maxsize=32)
def projection_matrix(channels: int, n_stats: int, seed: int) -> np.ndarray:
    """Seeded (channels, n_stats) matrix with orthonormal columns (or rows if channels < n_stats)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((max(channels, n_stats), min(channels, n_stats)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # unique QR
    proj = q if channels >= n_stats else q.T
    proj.setflags(write=False)
    return proj


def patch_statistics(pixels: np.ndarray, patch_size: int) -> np.ndarray:
    """Raw per-patch statistics, shape (n, m, 3 * STATS_PER_CHANNEL).

    Only pixels inside a patch contribute to that patch's statistics.
    """
    h, w, _ = pixels.shape
    n, m = h // patch_size, w // patch_size
    px = pixels[: n * patch_size, : m * patch_size]
    # (n, m, p, p, 3)
    blocks = px.reshape(n, patch_size, m, patch_size, 3).transpose(0, 2, 1, 3, 4)
    feats = [blocks.mean(axis=(2, 3)), blocks.std(axis=(2, 3))]
    if patch_size >= 3:
        for k in _KERNELS:
            resp = np.zeros(blocks.shape[:2] + (patch_size - 2, patch_size - 2, 3))
            for di in range(3):
                for dj in range(3):
                    resp += k[di, dj] * blocks[:, :, di:di + patch_size - 2, dj:dj + patch_size - 2]
            feats.append(np.abs(resp).mean(axis=(2, 3)))
    else:
        feats.extend(np.zeros((n, m, 3)) for _ in _KERNELS)
    return np.concatenate(feats, axis=-1)


def toy_features(image: ImageTensor, config: BackboneConfig) -> FeatureMap:
    stats = patch_statistics(image.pixels, config.patch_size)
    n, m, k = stats.shape
    flat = stats.reshape(n * m, k)
    flat = flat - flat.mean(axis=0, keepdims=True)
    proj = projection_matrix(config.channels, k, config.seed)
    feats = config.gain * flat @ proj.T  # (n*m, c)
    data = np.ascontiguousarray(feats.T.reshape(config.channels, n, m))
    return FeatureMap(data, config.patch_size, image.source_id)


def write_feature_file(path: str, data: np.ndarray) -> None:
    """Write ``data`` (c, n, m) as magic + three uint32 dims + row-major float32."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 3:
        raise InputError(f"feature array must be (c, n, m), got {data.shape}")
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(struct.pack("<3I", *data.shape))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_feature_file(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(len(FEAT_MAGIC)) != FEAT_MAGIC:
            raise InputError(f"{path}: not a feature file")
        c, n, m = struct.unpack("<3I", fh.read(12))
        raw = fh.read()
    if len(raw) != 4 * c * n * m:
        raise InputError(f"{path}: expected {c}x{n}x{m} values, file is truncated or padded")
    return np.frombuffer(raw, dtype="<f4").reshape(c, n, m).astype(np.float64)


def adapter_features(image: ImageTensor, config: BackboneConfig) -> FeatureMap:
    if not config.feature_dir:
        raise ConfigError("backbone.feature_dir is required for the pretrained adapter")
    path = os.path.join(config.feature_dir, f"{image.source_id}.feat")
    if not os.path.exists(path):
        raise InputError(f"missing feature file {path}")
    data = read_feature_file(path)
    h, w = image.size
    expected = (h // config.patch_size, w // config.patch_size)
    if data.shape[1:] != expected:
        raise InputError(f"{path}: grid {data.shape[1:]} does not match image grid {expected}")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite feature values")
    return FeatureMap(data, config.patch_size, image.source_id)


BACKBONES = {
    "toy": toy_features,
    "pretrained-vit-adapter": adapter_features,
}


def extract_features(image: ImageTensor, config: BackboneConfig) -> FeatureMap:
    """Map an image to its (c, n, m) patch features; pure in (image, config)."""
    try:
        fn = BACKBONES[config.name]
    except KeyError:
        raise ConfigError(f"unknown backbone {config.name!r}; choose from {sorted(BACKBONES)}") from None
    if config.patch_size <= 0:
        raise ConfigError("backbone.patch_size must be positive")
    h, w = image.size
    if h < config.patch_size or w < config.patch_size:
        raise InputError(f"{image.source_id}: image {h}x{w} is smaller than one {config.patch_size}px patch")
    return fn(image, config)
