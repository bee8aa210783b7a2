"""Adversarial and patchwise contrastive objectives."""

from __future__ import annotations

import torch
import torch.nn.functional as F


def adversarial_loss(disc, real_batch, fake_batch, form: str = "lsgan"):
    """Discriminator and generator adversarial terms.

    lsgan (default): least-squares targets 1/0, stabler on small data.
    log: the classic cross-entropy form; the discriminator maximizes
    E log D(y) + E log(1 - D(G(x))), the generator minimizes -log D(G(x)).
    Returns (loss_D, loss_G_adv); the discriminator term sees the fake
    batch detached.
    """
    pred_real = disc(real_batch)
    pred_fake_d = disc(fake_batch.detach())
    pred_fake_g = disc(fake_batch)
    if form == "lsgan":
        loss_d = 0.5 * ((pred_real - 1.0).pow(2).mean() + pred_fake_d.pow(2).mean())
        loss_g = (pred_fake_g - 1.0).pow(2).mean()
    elif form == "log":
        loss_d = (
            F.binary_cross_entropy_with_logits(pred_real, torch.ones_like(pred_real))
            + F.binary_cross_entropy_with_logits(pred_fake_d, torch.zeros_like(pred_fake_d))
        )
        loss_g = F.binary_cross_entropy_with_logits(pred_fake_g, torch.ones_like(pred_fake_g))
    else:
        raise ValueError(f"unknown adversarial form {form!r}")
    return loss_d, loss_g


def log_form_d_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Cross-entropy discriminator loss on PROBABILITIES (for closed-form
    checks): -E[log D(y)] - E[log(1 - D(G(x)))]."""
    return -(torch.log(d_real).mean() + torch.log1p(-d_fake).mean())


def patchwise_contrastive_loss(
    q: torch.Tensor,
    k_pos: torch.Tensor,
    k_negs: torch.Tensor,
    tau: float = 0.07,
) -> torch.Tensor:
    """InfoNCE over patch features.

    q, k_pos: (N, D) L2-normalized anchors and their mirrored positives;
    k_negs: (N, M, D) negatives per anchor. Equivalent to softmax cross
    entropy with the positive logit at index 0.
    """
    if k_negs.dim() != 3 or k_negs.shape[1] < 1:
        raise ValueError("need at least one negative per anchor")
    pos = (q * k_pos).sum(dim=1, keepdim=True)
    neg = torch.bmm(k_negs, q.unsqueeze(2)).squeeze(2)
    logits = torch.cat([pos, neg], dim=1) / tau
    target = torch.zeros(len(q), dtype=torch.long, device=q.device)
    return F.cross_entropy(logits, target)
