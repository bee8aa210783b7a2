"""Dataset access for the paired PNG layout the map simulator writes.

Pairing is deliberately not used for supervision: the two domains are
served independently shuffled, as the contrastive method expects. Trinary
codes map onto the generator's tanh range exactly as the inference side
does: occupied 0 -> -1.0, free 200 -> +0.6, unexplored 255 -> +1.0.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image

CODE_VALUES = {0: -1.0, 200: 0.6, 255: 1.0}


def load_grid_tensor(path: str, image_size: int = 256) -> torch.Tensor:
    """PNG -> (1, S, S) float tensor in the tanh value range."""
    with Image.open(path) as im:
        px = np.asarray(im.convert("L"), dtype=np.uint8)
    if px.shape != (image_size, image_size):
        im2 = Image.fromarray(px, mode="L").resize(
            (image_size, image_size), resample=Image.NEAREST
        )
        px = np.asarray(im2, dtype=np.uint8)
    values = np.full(px.shape, 0.6, dtype=np.float32)
    for code, val in CODE_VALUES.items():
        values[px == code] = val
    return torch.from_numpy(values).unsqueeze(0)


class UnpairedGridDataset:
    """Serves (x, y) with independently shuffled domain orderings."""

    def __init__(self, dataset_dir: str, image_size: int = 256, limit: int = None):
        names = sorted(os.listdir(dataset_dir))
        self.err = [os.path.join(dataset_dir, n) for n in names if n.endswith("_err.png")]
        self.clean = [os.path.join(dataset_dir, n) for n in names if n.endswith("_clean.png")]
        if limit:
            self.err = self.err[:limit]
            self.clean = self.clean[:limit]
        if not self.err or not self.clean:
            raise FileNotFoundError(f"no paired PNG samples under {dataset_dir}")
        self.image_size = image_size
        self._cache: dict = {}

    def __len__(self) -> int:
        return min(len(self.err), len(self.clean))

    def _load(self, path):
        if path not in self._cache:
            self._cache[path] = load_grid_tensor(path, self.image_size)
        return self._cache[path]

    def epoch(self, rng: np.random.Generator):
        order_x = rng.permutation(len(self.err))[: len(self)]
        order_y = rng.permutation(len(self.clean))[: len(self)]
        for ix, iy in zip(order_x, order_y):
            yield self._load(self.err[ix])[None], self._load(self.clean[iy])[None]

    def paired(self, index: int):
        """Aligned (erroneous, clean) access for evaluation only."""
        err = self.err[index]
        clean = err.replace("_err.png", "_clean.png")
        return self._load(err)[None], self._load(clean)[None]
