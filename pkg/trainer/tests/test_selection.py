import torch

from gridforge_trainer.losses import patchwise_contrastive_loss
from gridforge_trainer.networks import ProjectionHead, init_weights
from gridforge_trainer.selection import (
    gather_patches,
    select_patch_indices,
    select_patches_qs,
)


def test_uniform_features_still_well_defined():
    feat = torch.ones(8, 12, 12)
    idx = select_patch_indices(feat, 16)
    assert len(idx) == 16
    assert len(set(idx.tolist())) == 16


def test_random_mode_reproduces_baseline_scheme():
    g1 = torch.Generator().manual_seed(7)
    g2 = torch.Generator().manual_seed(7)
    feat = torch.randn(4, 10, 10)
    a = select_patch_indices(feat, 20, mode="random", generator=g1)
    b = torch.randperm(100, generator=g2)[:20]
    assert torch.equal(a, b)


def test_anchor_positive_index_alignment():
    # features encode their own flat position; after selection the anchor
    # and its positive must decode to the same location
    h = w = 9
    pos = torch.arange(h * w, dtype=torch.float32).reshape(1, 1, h, w)
    feats_x = [pos + 0.25]
    feats_gx = [pos + 0.5]

    class IdentityProj:
        def __call__(self, li, patches):
            return patches

    triples = select_patches_qs(feats_x, feats_gx, IdentityProj(), n_patches=10,
                                mode="random", generator=torch.Generator().manual_seed(0))
    q, k_pos, k_negs = triples[0]
    assert torch.allclose(q - 0.5, k_pos - 0.25)
    assert k_negs.shape == (10, 9, 1)


def test_selection_feeds_well_defined_loss():
    torch.manual_seed(1)
    feats_x = [torch.randn(1, 8, 16, 16)]
    feats_gx = [torch.randn(1, 8, 16, 16)]
    proj = ProjectionHead([8])
    init_weights(proj)
    triples = select_patches_qs(feats_x, feats_gx, proj, n_patches=32)
    q, kp, kn = triples[0]
    loss = patchwise_contrastive_loss(q, kp, kn)
    assert torch.isfinite(loss)


def test_oversubscription_warns_and_samples(recwarn):
    feat = torch.randn(4, 4, 4)  # 16 locations
    idx = select_patch_indices(feat, 24, generator=torch.Generator().manual_seed(0))
    assert len(idx) == 24
    assert any("replacement" in str(w.message) for w in recwarn.list)
