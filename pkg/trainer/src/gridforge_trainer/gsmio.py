"""Writer/reader for the .gsm generator weight exchange format.

Layout: magic ``GSM1``; UTF-8 header terminated by a zero byte with one
``kind in_ch out_ch kernel stride pad`` line per layer; little-endian
float32 tensors in layer order (weights, biases; instance-norm stores
scale then shift). Conv weights are (out, in, k, k); transposed-conv
weights are (in, out, k, k); everything row-major.
"""

from __future__ import annotations

import numpy as np
import torch

from .networks import Generator
from .presets import Layer

MAGIC = b"GSM1"


class ExportError(ValueError):
    pass


def export_weights(gen: Generator, path: str) -> None:
    """Serialize a generator; header order matches the descriptor list."""
    header = "\n".join(layer.header_line() for layer in gen.layers) + "\n"
    chunks = [MAGIC, header.encode("utf-8"), b"\x00"]
    for layer, module in gen.parameterized:
        if layer.kind in ("conv", "transposed-conv"):
            tensors = [module.weight, module.bias]
        elif layer.kind == "instance-norm":
            tensors = [module.weight, module.bias]
        else:
            raise ExportError(f"unsupported layer kind {layer.kind!r}")
        for t in tensors:
            arr = t.detach().cpu().numpy().astype("<f4")
            chunks.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_weights(path: str) -> tuple[list[Layer], Generator]:
    """Rebuild a generator from a .gsm file (the trainer-side reader)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ExportError(f"{path}: bad magic")
    end = blob.find(b"\x00", 4)
    if end < 0:
        raise ExportError(f"{path}: unterminated header")
    layers = []
    for line in blob[4:end].decode("utf-8").splitlines():
        if not line.strip():
            continue
        kind, *nums = line.split()
        layers.append(Layer(kind, *(int(n) for n in nums)))
    flat = np.frombuffer(blob[end + 1 :], dtype="<f4")
    expected = sum(l.param_count() for l in layers)
    if len(flat) != expected:
        raise ExportError(f"{path}: expected {expected} weights, found {len(flat)}")

    gen = Generator(layers)
    offset = 0
    with torch.no_grad():
        for layer, module in gen.parameterized:
            for tensor in (module.weight, module.bias):
                n = tensor.numel()
                chunk = torch.from_numpy(flat[offset : offset + n].copy())
                tensor.copy_(chunk.reshape(tensor.shape))
                offset += n
    return layers, gen
