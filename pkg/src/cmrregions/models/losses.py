"""Compound soft-Dice + cross-entropy segmentation loss."""

from __future__ import annotations

import torch
import torch.nn.functional as F

DICE_SMOOTH = 1e-6
FOREGROUND = (1, 2, 3)


def soft_dice_per_label(probs: torch.Tensor, target: torch.Tensor,
                        labels=FOREGROUND, smooth: float = DICE_SMOOTH) -> torch.Tensor:
    """Batch soft Dice per label; ``probs`` is (B, C, H, W), ``target`` (B, H, W) integer codes."""
    onehot = F.one_hot(target.long(), probs.shape[1]).permute(0, 3, 1, 2).to(probs.dtype)
    idx = list(labels)
    p = probs[:, idx]
    g = onehot[:, idx]
    dims = (0, 2, 3)
    inter = (p * g).sum(dims)
    denom = p.sum(dims) + g.sum(dims)
    return (2 * inter + smooth) / (denom + smooth)


def compound_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    ce = F.cross_entropy(logits, target.long())
    dice = soft_dice_per_label(torch.softmax(logits, dim=1), target)
    return ce + (1.0 - dice.mean())
