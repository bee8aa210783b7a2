"""Training loop for the contrastive I2I cleaning GAN.

Objective: L_G = L_adv + L_con^X + L_con^Y, where L_con^X ties patch
features between input and translation, and L_con^Y is the identity term
(clean-domain images passed through the generator). The discriminator is
the PatchGAN; updates alternate 1:1. Adam(0.5, 0.999), batch 1, initial
learning rate 2e-4 decaying linearly to zero over the run.
"""

from __future__ import annotations

import argparse
import csv
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .data import UnpairedGridDataset
from .gsmio import export_weights
from .losses import adversarial_loss, patchwise_contrastive_loss
from .networks import Generator, PatchDiscriminator, ProjectionHead, init_weights
from .presets import PRESETS
from .selection import select_patches_qs


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    tau: float = 0.07
    n_patches: int = 256
    preset: str = "tiny"
    adversarial_form: str = "lsgan"
    selection: str = "qs-attn"
    image_size: int = 256
    disc_base: int = 64
    nce_identity: bool = True
    paired_l1: float = 0.0  # off-spec supervised ablation, 0 disables
    seed: int = 0
    limit: int = None
    log_every: int = 50

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.n_patches < 2:
            raise ValueError("need at least two patches for negatives")


@dataclass
class EpochStats:
    g_total: float
    g_adv: float
    nce_x: float
    nce_y: float
    d_loss: float


class Trainer:
    def __init__(self, config: TrainConfig):
        self.config = config
        torch.manual_seed(config.seed)
        self.gen = Generator(PRESETS[config.preset]())
        init_weights(self.gen)
        self.disc = PatchDiscriminator(base=config.disc_base)
        init_weights(self.disc)
        probe = torch.zeros(1, 1, config.image_size, config.image_size)
        with torch.no_grad():
            dims = [f.shape[1] for f in self.gen.encode(probe)]
        self.proj = ProjectionHead(dims)
        init_weights(self.proj)
        params_g = list(self.gen.parameters()) + list(self.proj.parameters())
        self.opt_g = torch.optim.Adam(params_g, lr=config.lr,
                                      betas=(config.beta1, config.beta2))
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=config.lr,
                                      betas=(config.beta1, config.beta2))
        self.sel_gen = torch.Generator().manual_seed(config.seed)

    def _nce(self, src: torch.Tensor, translated: torch.Tensor,
             src_feats: list = None) -> torch.Tensor:
        feats_x = src_feats if src_feats is not None else self.gen.encode(src)
        feats_gx = self.gen.encode(translated)
        triples = select_patches_qs(
            feats_x, feats_gx, self.proj,
            n_patches=self.config.n_patches,
            mode=self.config.selection,
            generator=self.sel_gen,
        )
        losses = [patchwise_contrastive_loss(q, k, kn, self.config.tau)
                  for q, k, kn in triples]
        return torch.stack(losses).mean()

    def _set_lr(self, epoch: int) -> float:
        # linear decay from lr to 0 across the configured epochs
        frac = 1.0 - epoch / max(self.config.epochs, 1)
        lr = self.config.lr * frac
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def train_epoch(self, dataset: UnpairedGridDataset, epoch: int,
                    rng: np.random.Generator) -> EpochStats:
        self._set_lr(epoch)
        sums = np.zeros(5)
        steps = 0
        for step, (x, y) in enumerate(dataset.epoch(rng)):
            fake, feats_x = self.gen(x, extract_features=True)

            loss_d, _ = adversarial_loss(
                self.disc, y, fake.detach(), form=self.config.adversarial_form
            )
            self.opt_d.zero_grad(set_to_none=True)
            loss_d.backward()
            self.opt_d.step()
            # the generator plays against the freshly updated discriminator
            _, loss_g_adv = adversarial_loss(
                self.disc, y, fake, form=self.config.adversarial_form
            )

            nce_x = self._nce(x, fake, src_feats=feats_x)
            if self.config.nce_identity:
                idt, feats_y = self.gen(y, extract_features=True)
                nce_y = self._nce(y, idt, src_feats=feats_y)
            else:
                nce_y = torch.zeros(())
            loss_g = loss_g_adv + nce_x + nce_y
            if self.config.paired_l1 > 0.0:
                # off-spec supervised ablation; requires aligned pair order
                loss_g = loss_g + self.config.paired_l1 * (fake - y).abs().mean()
            self.opt_g.zero_grad(set_to_none=True)
            loss_g.backward()
            self.opt_g.step()

            vals = (loss_g.item(), loss_g_adv.item(), nce_x.item(),
                    nce_y.detach().item(), loss_d.item())
            if not all(np.isfinite(v) for v in vals):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} step {step}: {vals}"
                )
            sums += vals
            steps += 1
        return EpochStats(*(sums / max(steps, 1)))


def train(config: TrainConfig, dataset_dir: str, out_dir: str,
          checkpoint_every: int = 1) -> list[EpochStats]:
    os.makedirs(out_dir, exist_ok=True)
    dataset = UnpairedGridDataset(dataset_dir, image_size=config.image_size,
                                  limit=config.limit)
    trainer = Trainer(config)
    rng = np.random.default_rng(config.seed)
    history = []
    log_path = os.path.join(out_dir, "training_log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "g_total", "g_adv", "nce_x", "nce_y", "d_loss", "lr"])
        for epoch in range(config.epochs):
            stats = trainer.train_epoch(dataset, epoch, rng)
            history.append(stats)
            writer.writerow([
                epoch,
                f"{stats.g_total:.6f}",
                f"{stats.g_adv:.6f}",
                f"{stats.nce_x:.6f}",
                f"{stats.nce_y:.6f}",
                f"{stats.d_loss:.6f}",
                f"{trainer.opt_g.param_groups[0]['lr']:.2e}",
            ])
            fh.flush()
            if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                torch.save(
                    {"generator": trainer.gen.state_dict(), "epoch": epoch},
                    os.path.join(out_dir, f"checkpoint_{epoch:04d}.pt"),
                )
            export_weights(trainer.gen, os.path.join(out_dir, "generator.gsm"))
    return history


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("dataset_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--preset", choices=sorted(PRESETS), default="tiny")
    parser.add_argument("--image-size", type=int, default=256)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--limit", type=int, default=None,
                        help="cap the number of samples per domain")
    parser.add_argument("--adversarial-form", choices=("lsgan", "log"), default="lsgan")
    parser.add_argument("--random-selection", action="store_true",
                        help="baseline random patch selection instead of attention")
    parser.add_argument("--disc-base", type=int, default=64)
    parser.add_argument("--dry-run", action="store_true",
                        help="build the model and export untrained weights")
    args = parser.parse_args(argv)

    config = TrainConfig(
        epochs=args.epochs,
        preset=args.preset,
        image_size=args.image_size,
        seed=args.seed,
        limit=args.limit,
        adversarial_form=args.adversarial_form,
        selection="random" if args.random_selection else "qs-attn",
        disc_base=args.disc_base,
    )
    if args.dry_run:
        os.makedirs(args.out_dir, exist_ok=True)
        trainer = Trainer(config)
        export_weights(trainer.gen, os.path.join(args.out_dir, "generator.gsm"))
        print(os.path.join(args.out_dir, "generator.gsm"))
        return 0
    history = train(config, args.dataset_dir, args.out_dir)
    print(f"trained {len(history)} epochs; final G loss {history[-1].g_total:.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
