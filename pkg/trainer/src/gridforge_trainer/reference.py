"""Reference inference used for cross-implementation parity checks."""

from __future__ import annotations

import numpy as np
import torch

from .gsmio import load_weights


def reference_forward(gsm_path: str, image: np.ndarray) -> np.ndarray:
    """Run a serialized generator on a (S, S) raster in [-1, 1]."""
    _, gen = load_weights(gsm_path)
    gen.eval()
    with torch.no_grad():
        x = torch.from_numpy(np.asarray(image, dtype=np.float32))[None, None]
        y = gen(x)
    return y[0, 0].numpy()
