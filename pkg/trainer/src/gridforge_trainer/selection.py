"""Patch location selection for the contrastive loss.

Query-selected attention: rank positions by the entropy of their row of
the feature self-attention matrix and keep the most decisive (lowest
entropy) ones. Positives mirror the anchor locations in the input image's
features; negatives are the other selected locations of the same image.
A uniform-random mode reproduces the baseline selection scheme.
"""

from __future__ import annotations

import warnings

import torch
import torch.nn.functional as F


_MAX_KEYS = 2048


def select_patch_indices(
    feat_x: torch.Tensor,
    n_patches: int,
    mode: str = "qs-attn",
    generator: torch.Generator = None,
) -> torch.Tensor:
    """Choose patch positions from a (C, H, W) input-image feature map.

    Entropy ranking on large maps runs over sampled candidate rows and key
    columns so cost stays bounded; the ranking statistic is unchanged.
    """
    c, h, w = feat_x.shape
    n_pos = h * w
    flat = feat_x.reshape(c, n_pos).t()  # (P, C)
    if n_patches > n_pos:
        warnings.warn(
            f"requested {n_patches} patches from {n_pos} locations; sampling with replacement"
        )
        extra = torch.randint(0, n_pos, (n_patches - n_pos,), generator=generator)
        return torch.cat([torch.arange(n_pos), extra])
    if mode == "random":
        perm = torch.randperm(n_pos, generator=generator)
        return perm[:n_patches]
    if mode != "qs-attn":
        raise ValueError(f"unknown selection mode {mode!r}")
    with torch.no_grad():
        max_candidates = max(n_patches, min(n_pos, 4 * n_patches))
        if n_pos > max_candidates:
            cand = torch.randperm(n_pos, generator=generator)[:max_candidates]
        else:
            cand = torch.arange(n_pos)
        if n_pos > _MAX_KEYS:
            keys = torch.randperm(n_pos, generator=generator)[:_MAX_KEYS]
        else:
            keys = torch.arange(n_pos)
        scaled = flat[cand] / float(c) ** 0.5
        attn = F.softmax(scaled @ flat[keys].t(), dim=1)
        entropy = -(attn * torch.log(attn + 1e-12)).sum(dim=1)
        order = torch.argsort(entropy)  # most decisive rows first
    return cand[order[:n_patches]]


def gather_patches(feat: torch.Tensor, indices: torch.Tensor) -> torch.Tensor:
    """(C, H, W) features -> (N, C) raw patch vectors at flat indices."""
    c = feat.shape[0]
    flat = feat.reshape(c, -1).t()
    return flat[indices]


def select_patches_qs(
    feats_x: list[torch.Tensor],
    feats_gx: list[torch.Tensor],
    projector,
    n_patches: int = 256,
    mode: str = "qs-attn",
    generator: torch.Generator = None,
):
    """Per feature layer: anchors from the translated image, positives
    mirrored at the same locations in the input image, negatives drawn from
    the other selected locations. Returns [(q, k_pos, k_negs), ...]."""
    out = []
    for li, (fx, fgx) in enumerate(zip(feats_x, feats_gx)):
        idx = select_patch_indices(fx[0], n_patches, mode=mode, generator=generator)
        q = projector(li, gather_patches(fgx[0], idx))
        k = projector(li, gather_patches(fx[0], idx))
        n = len(idx)
        # negatives: every other selected location's positive key
        mask = ~torch.eye(n, dtype=torch.bool, device=q.device)
        k_negs = k.unsqueeze(0).expand(n, n, -1)[mask].reshape(n, n - 1, -1)
        out.append((q, k, k_negs))
    return out
