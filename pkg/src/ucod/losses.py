"""Training objectives. All functions take and return torch tensors so autograd
supplies the gradients."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import InputError

EPS = 1e-7
GENERATOR = "generator"
DISCRIMINATOR = "discriminator"


def bce(pred: torch.Tensor, target: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Soft-target binary cross-entropy, averaged, with pred clamped to [eps, 1 - eps]."""
    pred = pred.clamp(eps, 1.0 - eps)
    return -(target * torch.log(pred) + (1.0 - target) * torch.log(1.0 - pred)).mean()


def seg_loss(y_fg: torch.Tensor, y_bg: torch.Tensor, p: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """BCE(y_fg, p) + BCE(1 - y_bg, p): the background branch is scored inverted."""
    if y_fg.shape != p.shape or y_bg.shape != p.shape:
        raise InputError(f"resolution mismatch: {tuple(y_fg.shape)}, {tuple(y_bg.shape)}, {tuple(p.shape)}")
    return bce(y_fg, p, eps) + bce(1.0 - y_bg, p, eps)


def seg_loss_logits(logit_fg: torch.Tensor, logit_bg: torch.Tensor, p: torch.Tensor) -> torch.Tensor:
    """Logit path of :func:`seg_loss`; 1 - sigmoid(x) == sigmoid(-x)."""
    if logit_fg.shape != p.shape or logit_bg.shape != p.shape:
        raise InputError("resolution mismatch between logits and pseudo-label")
    return (F.binary_cross_entropy_with_logits(logit_fg, p)
            + F.binary_cross_entropy_with_logits(-logit_bg, p))


def orth_loss(q_fg: torch.Tensor, q_bg: torch.Tensor) -> torch.Tensor:
    """Mean squared off-diagonal entry of q_fg @ q_bg^T over all (n*m)^2 cells.

    Batched (B, n*m, c) inputs are averaged over the batch.
    """
    if q_fg.shape != q_bg.shape:
        raise InputError(f"query shape mismatch: {tuple(q_fg.shape)} vs {tuple(q_bg.shape)}")
    if q_fg.ndim == 2:
        q_fg, q_bg = q_fg[None], q_bg[None]
    gram = q_fg @ q_bg.transpose(1, 2)
    n = gram.shape[-1]
    off = gram - torch.diag_embed(torch.diagonal(gram, dim1=-2, dim2=-1))
    return (off ** 2).sum(dim=(-2, -1)).mean() / (n * n)


def dis_loss(y_hat: torch.Tensor, y, eps: float = EPS) -> torch.Tensor:
    """Discriminator BCE; label 1 for fixed-strategy masks, 0 for student masks."""
    y_hat = torch.as_tensor(y_hat)
    y = torch.as_tensor(y, dtype=y_hat.dtype).expand_as(y_hat)
    return bce(y_hat, y, eps)


def _scalar(x) -> float:
    return float(x.detach()) if torch.is_tensor(x) else float(x)


@dataclass
class LossBundle:
    l_seg: torch.Tensor | float = 0.0
    l_orth: torch.Tensor | float = 0.0
    l_dis: torch.Tensor | float = 0.0
    l_total: torch.Tensor | float = 0.0
    phase: str = GENERATOR

    def as_dict(self) -> dict:
        return {"phase": self.phase, "l_seg": _scalar(self.l_seg), "l_orth": _scalar(self.l_orth),
                "l_dis": _scalar(self.l_dis), "l_total": _scalar(self.l_total)}


def total_loss(l_seg=0.0, l_orth=0.0, l_dis=0.0, phase: str | None = None,
               weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> LossBundle:
    """Weighted sum of the three objectives.

    ``phase="generator"`` zeroes the discriminator term (it is frozen);
    ``phase="discriminator"`` keeps only it. ``phase=None`` sums everything.
    """
    if phase == GENERATOR:
        l_dis = 0.0
    elif phase == DISCRIMINATOR:
        l_seg, l_orth = 0.0, 0.0
    elif phase is not None:
        raise InputError(f"unknown phase {phase!r}")
    w_seg, w_orth, w_dis = weights
    total = w_seg * l_seg + w_orth * l_orth + w_dis * l_dis
    return LossBundle(l_seg, l_orth, l_dis, total, phase or "joint")
