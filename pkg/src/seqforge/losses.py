"""cGAN + weighted L1 objective, in binary cross-entropy-on-logits form."""

from __future__ import annotations

import warnings
from typing import NamedTuple

import torch
import torch.nn.functional as F


class NonFiniteLossError(FloatingPointError):
    pass


class EmptyMaskWarning(RuntimeWarning):
    """Masked L1 over an all-zero mask; the L1 term is reported as 0."""


class GeneratorLoss(NamedTuple):
    total: torch.Tensor
    adv: torch.Tensor
    l1: torch.Tensor


def _check_finite(*tensors: torch.Tensor):
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NonFiniteLossError("non-finite logits or images entering the loss")


def adversarial_loss_d(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    """Mean over patches of [softplus(-real) + softplus(fake)] / 2."""
    if logits_real.shape != logits_fake.shape:
        raise ValueError(f"logit extents differ: {tuple(logits_real.shape)} vs {tuple(logits_fake.shape)}")
    _check_finite(logits_real, logits_fake)
    return 0.5 * (F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean())


def masked_l1(y_fake: torch.Tensor, y_target: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean |y_fake - y_target| over masked pixels and all channels."""
    diff = (y_fake - y_target).abs()
    if mask is None:
        return diff.mean()
    weight = mask.to(diff.dtype).expand_as(diff)
    denom = weight.sum()
    if denom == 0:
        warnings.warn("foreground mask is empty; L1 term set to 0", EmptyMaskWarning, stacklevel=2)
        return diff.sum() * 0.0
    return (diff * weight).sum() / denom


def generator_loss(
    logits_fake: torch.Tensor,
    y_fake: torch.Tensor,
    y_target: torch.Tensor,
    mask: torch.Tensor | None,
    l1_weight: float,
) -> GeneratorLoss:
    if y_fake.shape != y_target.shape:
        raise ValueError(f"image extents differ: {tuple(y_fake.shape)} vs {tuple(y_target.shape)}")
    _check_finite(logits_fake, y_fake)
    adv = F.softplus(-logits_fake).mean()
    l1 = masked_l1(y_fake, y_target, mask)
    return GeneratorLoss(adv + l1_weight * l1, adv, l1)


def stage1_target(real: torch.Tensor, foreground_mask: torch.Tensor) -> torch.Tensor:
    """Real image inside the foreground, -1 (black in network range) outside."""
    keep = foreground_mask.to(torch.bool).expand_as(real)
    return torch.where(keep, real, torch.full_like(real, -1.0))
