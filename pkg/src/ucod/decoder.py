"""Dual-branch adversarial decoder, EMA teacher updates and teacher pseudo-labels."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .backbone import FeatureMap
from .errors import InputError


@dataclass
class DecoderOutput:
    """Paired masks plus the query maps kept for the orthogonality penalty.

    Unbatched outputs have masks (n, m) and queries (n*m, c); batched ones
    carry a leading batch dimension.
    """

    y_fg: torch.Tensor
    y_bg: torch.Tensor
    q_fg: torch.Tensor
    q_bg: torch.Tensor
    logit_fg: torch.Tensor
    logit_bg: torch.Tensor


class DBADecoder(nn.Module):
    """Foreground/background decoder over frozen patch features.

    Each branch projects its half of a channel-doubling 1x1 conv through a
    learnable (c, c) embedding to get queries Q, forms the position-by-position
    attention ``sigmoid(Q F^T)``, adds the attended features back onto F and
    reads one logit per patch with a 1x1 conv.
    """

    def __init__(self, channels: int, generator: torch.Generator | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.channels = channels
        self.split_conv = nn.Conv2d(channels, 2 * channels, 1, dtype=dtype)
        self.embed_fg = nn.Parameter(torch.empty(channels, channels, dtype=dtype))
        self.embed_bg = nn.Parameter(torch.empty(channels, channels, dtype=dtype))
        self.head_fg = nn.Conv2d(channels, 1, 1, dtype=dtype)
        self.head_bg = nn.Conv2d(channels, 1, 1, dtype=dtype)
        self.reset_parameters(generator)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator | None = None):
        for conv in (self.split_conv, self.head_fg, self.head_bg):
            bound = 1.0 / np.sqrt(conv.in_channels)
            conv.weight.uniform_(-bound, bound, generator=generator)
            conv.bias.uniform_(-bound, bound, generator=generator)
        self.embed_fg.normal_(0.0, 0.02, generator=generator)
        self.embed_bg.normal_(0.0, 0.02, generator=generator)

    def _branch(self, f, embed, head, n, m):
        # f: (B, N, c)
        q = f @ embed
        attn = torch.sigmoid(q @ f.transpose(1, 2))
        z = attn @ f + f
        b, _, c = z.shape
        z = z.transpose(1, 2).reshape(b, c, n, m)
        logit = head(z)[:, 0]
        return q, logit

    def forward(self, feats: torch.Tensor) -> DecoderOutput:
        if feats.ndim != 4 or feats.shape[1] != self.channels:
            raise InputError(f"expected features (B, {self.channels}, n, m), got {tuple(feats.shape)}")
        b, c, n, m = feats.shape
        doubled = self.split_conv(feats)
        f_fg = doubled[:, :c].reshape(b, c, n * m).transpose(1, 2)
        f_bg = doubled[:, c:].reshape(b, c, n * m).transpose(1, 2)
        q_fg, logit_fg = self._branch(f_fg, self.embed_fg, self.head_fg, n, m)
        q_bg, logit_bg = self._branch(f_bg, self.embed_bg, self.head_bg, n, m)
        return DecoderOutput(torch.sigmoid(logit_fg), torch.sigmoid(logit_bg),
                             q_fg, q_bg, logit_fg, logit_bg)


def features_tensor(features: FeatureMap | np.ndarray | torch.Tensor,
                    dtype: torch.dtype = torch.float32) -> torch.Tensor:
    if isinstance(features, FeatureMap):
        features = features.data
    if isinstance(features, np.ndarray):
        features = torch.from_numpy(np.ascontiguousarray(features))
    return features.to(dtype)


def decode(features: FeatureMap | np.ndarray | torch.Tensor, params: DBADecoder) -> DecoderOutput:
    """Single-image forward pass; returns unbatched tensors."""
    dtype = params.split_conv.weight.dtype
    f = features_tensor(features, dtype)
    if f.ndim != 3:
        raise InputError(f"expected (c, n, m) features, got {tuple(f.shape)}")
    out = params(f[None])
    return DecoderOutput(*(t[0] for t in (out.y_fg, out.y_bg, out.q_fg, out.q_bg,
                                           out.logit_fg, out.logit_bg)))


def make_teacher(student: DBADecoder) -> DBADecoder:
    """Exact copy of the student with gradients switched off for good."""
    teacher = copy.deepcopy(student)
    for p in teacher.parameters():
        p.requires_grad_(False)
    return teacher


@torch.no_grad()
def ema_update(teacher: nn.Module, student: nn.Module, eta: float) -> nn.Module:
    """In place: theta_t <- eta * theta_t + (1 - eta) * theta_s. Returns ``teacher``."""
    if not 0.0 <= eta <= 1.0:
        raise InputError(f"EMA momentum must lie in [0, 1], got {eta}")
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise InputError("teacher and student have different parameter sets")
    for name, pt in t_params.items():
        ps = s_params[name]
        if pt.shape != ps.shape:
            raise InputError(f"shape mismatch for {name}: {tuple(pt.shape)} vs {tuple(ps.shape)}")
        pt.mul_(eta).add_(ps.detach(), alpha=1.0 - eta)
    return teacher


@torch.no_grad()
def teacher_pseudo_label(output: DecoderOutput) -> torch.Tensor:
    """Average of the foreground mask and the inverted background mask."""
    return 0.5 * (output.y_fg.detach() + (1.0 - output.y_bg.detach()))
