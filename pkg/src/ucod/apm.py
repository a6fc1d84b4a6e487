"""Adaptive pseudo-label mixing: mask discriminator, temporal score and the convex mix."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, InputError
from .masks import SoftMask, resize_tensor

MIXING_STRATEGIES = ("apm", "proportional", "linear_decay")


class Discriminator(nn.Module):
    """Small strided conv classifier: P(mask came from the fixed strategy).

    Masks of any size are resized to ``input_size`` x ``input_size`` first.
    """

    def __init__(self, input_size: int = 64, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.input_size = input_size
        self.convs = nn.Sequential(
            nn.Conv2d(1, 8, 3, stride=2, padding=1, dtype=dtype), nn.LeakyReLU(0.2),
            nn.Conv2d(8, 16, 3, stride=2, padding=1, dtype=dtype), nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 3, stride=2, padding=1, dtype=dtype), nn.LeakyReLU(0.2),
        )
        self.fc = nn.Linear(32, 1, dtype=dtype)
        self.reset_parameters(generator)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator | None = None):
        for mod in self.modules():
            if isinstance(mod, (nn.Conv2d, nn.Linear)):
                fan_in = mod.weight[0].numel()
                bound = 1.0 / np.sqrt(fan_in)
                mod.weight.uniform_(-bound, bound, generator=generator)
                mod.bias.uniform_(-bound, bound, generator=generator)

    def logits(self, masks: torch.Tensor) -> torch.Tensor:
        if masks.ndim == 2:
            masks = masks[None]
        x = resize_tensor(masks.to(self.fc.weight.dtype), (self.input_size, self.input_size))
        h = self.convs(x.unsqueeze(1))
        return self.fc(h.mean(dim=(2, 3)))[:, 0]

    def forward(self, masks: torch.Tensor) -> torch.Tensor:
        """(B, h, w) masks -> (B,) probabilities."""
        return torch.sigmoid(self.logits(masks))


@torch.no_grad()
def discriminate(mask: SoftMask | np.ndarray | torch.Tensor, params: nn.Module) -> float:
    if isinstance(mask, SoftMask):
        mask = mask.values
    t = mask if torch.is_tensor(mask) else torch.from_numpy(np.asarray(mask, dtype=np.float64))
    if not torch.all(torch.isfinite(t)):
        raise InputError("mask contains non-finite values")
    return float(params(t[None] if t.ndim == 2 else t)[0])


def score(y_p1, y_p2, t: int, T: int):
    """clip(t/T + (1 + cos(pi * |y_p1 - y_p2|)) / 2, 0, 1); vectorises over y."""
    if T <= 0 or not 0 <= t <= T:
        raise InputError(f"need 0 <= t <= T and T > 0, got t={t}, T={T}")
    diff = np.abs(np.asarray(y_p1, dtype=np.float64) - np.asarray(y_p2, dtype=np.float64))
    raw = t / T + 0.5 * (1.0 + np.cos(np.pi * diff))
    out = np.clip(raw, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def baseline_weight(strategy: str, t: int, T: int) -> float:
    if T <= 0 or not 0 <= t <= T:
        raise InputError(f"need 0 <= t <= T and T > 0, got t={t}, T={T}")
    if strategy == "proportional":
        return 0.5
    if strategy == "linear_decay":
        return t / T
    raise ConfigError(f"unknown mixing baseline {strategy!r}")


def mixing_weights(strategy: str, y_p1, y_p2, t: int, T: int) -> np.ndarray:
    """Per-image teacher weights for any configured strategy."""
    y_p1 = np.atleast_1d(np.asarray(y_p1, dtype=np.float64))
    if strategy == "apm":
        return np.atleast_1d(score(y_p1, y_p2, t, T))
    if strategy not in MIXING_STRATEGIES:
        raise ConfigError(f"unknown mixing strategy {strategy!r}; choose from {MIXING_STRATEGIES}")
    return np.full(y_p1.shape, baseline_weight(strategy, t, T))


def mix(p_t, p_fs, w):
    """w * p_t + (1 - w) * p_fs.

    Accepts SoftMasks, arrays or tensors. For batched tensors ``w`` may hold
    one weight per image.
    """
    if isinstance(p_t, SoftMask) or isinstance(p_fs, SoftMask):
        a = p_t.values if isinstance(p_t, SoftMask) else np.asarray(p_t, dtype=np.float64)
        b = p_fs.values if isinstance(p_fs, SoftMask) else np.asarray(p_fs, dtype=np.float64)
        if a.shape != b.shape:
            raise InputError(f"cannot mix masks of shapes {a.shape} and {b.shape}")
        w = float(w)
        if not 0.0 <= w <= 1.0:
            raise InputError(f"mixing weight must lie in [0, 1], got {w}")
        tag = p_t.resolution_tag if isinstance(p_t, SoftMask) else p_fs.resolution_tag
        return SoftMask(np.clip(w * a + (1.0 - w) * b, 0.0, 1.0), tag)
    if tuple(p_t.shape) != tuple(p_fs.shape):
        raise InputError(f"cannot mix masks of shapes {tuple(p_t.shape)} and {tuple(p_fs.shape)}")
    if torch.is_tensor(p_t):
        w = torch.as_tensor(w, dtype=p_t.dtype)
        if w.ndim == 1:
            w = w.view(-1, *([1] * (p_t.ndim - 1)))
        return w * p_t + (1.0 - w) * p_fs
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w.reshape(-1, *([1] * (np.ndim(p_t) - 1)))
    return w * p_t + (1.0 - w) * p_fs
