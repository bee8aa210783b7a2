"""Serialized generator weights (.gsm): the exchange format between the
training side and in-pipeline inference.

Layout: magic bytes ``GSM1``; a UTF-8 text header terminated by a zero
byte, one layer per line as ``kind in_ch out_ch kernel stride pad``; then
little-endian 32-bit float weights in layer order. Per layer the tensor
order is weights, biases, then (for instance-norm) scale and shift, each
row-major. Conv weights are (out, in, k, k); transposed-conv weights are
(in, out, k, k). Transposed convolutions upsample exactly by their stride
(implicit output padding of stride + 2*pad - kernel); instance-norm uses
per-sample statistics with eps 1e-5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAGIC = b"GSM1"
INSTANCE_NORM_EPS = 1e-5

LAYER_KINDS = (
    "conv",
    "transposed-conv",
    "instance-norm",
    "relu",
    "tanh",
    "residual-block-begin",
    "residual-block-end",
    "reflection-pad",
)


class ModelFormatError(ValueError):
    """Malformed or inconsistent .gsm content."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_ch: int
    out_ch: int
    kernel: int = 0
    stride: int = 0
    pad: int = 0

    def header_line(self) -> str:
        return f"{self.kind} {self.in_ch} {self.out_ch} {self.kernel} {self.stride} {self.pad}"

    def param_count(self) -> int:
        if self.kind in ("conv", "transposed-conv"):
            return self.in_ch * self.out_ch * self.kernel * self.kernel + self.out_ch
        if self.kind == "instance-norm":
            return 2 * self.in_ch
        return 0


@dataclass
class GeneratorModel:
    """Validated architecture plus per-layer parameter arrays.

    params[i] maps tensor names to float32 arrays for layers[i]:
    conv/transposed-conv carry "weight" and "bias"; instance-norm carries
    "scale" and "shift"; other kinds have an empty dict.
    """

    layers: list[LayerSpec]
    params: list[dict] = field(default_factory=list)

    def total_params(self) -> int:
        return sum(layer.param_count() for layer in self.layers)


def validate_architecture(layers: list[LayerSpec], input_size: int = 256) -> None:
    """Check channel chaining, residual closure, and final raster geometry."""
    if not layers:
        raise ModelFormatError("model has no layers")
    ch = 1
    size = input_size
    block_stack: list[tuple[int, int]] = []
    for i, layer in enumerate(layers):
        where = f"layer {i} ({layer.kind})"
        if layer.kind not in LAYER_KINDS:
            raise ModelFormatError(f"{where}: unknown layer kind")
        if layer.kind == "conv":
            if layer.in_ch != ch:
                raise ModelFormatError(f"{where}: expects {layer.in_ch} channels, chain has {ch}")
            size = (size + 2 * layer.pad - layer.kernel) // layer.stride + 1
            if size < 1:
                raise ModelFormatError(f"{where}: raster collapsed to {size}")
            ch = layer.out_ch
        elif layer.kind == "transposed-conv":
            if layer.in_ch != ch:
                raise ModelFormatError(f"{where}: expects {layer.in_ch} channels, chain has {ch}")
            if layer.stride + 2 * layer.pad - layer.kernel < 0:
                raise ModelFormatError(f"{where}: unsupported geometry (negative output padding)")
            size = size * layer.stride
            ch = layer.out_ch
        elif layer.kind == "reflection-pad":
            if layer.in_ch != ch or layer.out_ch != ch:
                raise ModelFormatError(f"{where}: channel mismatch")
            size = size + 2 * layer.pad
        elif layer.kind == "residual-block-begin":
            block_stack.append((ch, size))
        elif layer.kind == "residual-block-end":
            if not block_stack:
                raise ModelFormatError(f"{where}: unmatched residual-block-end")
            ch0, size0 = block_stack.pop()
            if ch != ch0 or size != size0:
                raise ModelFormatError(
                    f"{where}: residual block changes shape "
                    f"({ch0}ch/{size0}px -> {ch}ch/{size}px)"
                )
        else:  # instance-norm, relu, tanh
            if layer.in_ch != ch or layer.out_ch != ch:
                raise ModelFormatError(f"{where}: channel mismatch ({layer.in_ch}, chain {ch})")
    if block_stack:
        raise ModelFormatError("unclosed residual block")
    if ch != 1:
        raise ModelFormatError(f"model must end with 1 channel, got {ch}")
    if size != input_size:
        raise ModelFormatError(f"model must preserve the {input_size}px raster, got {size}")


def _split_params(layer: LayerSpec, flat: np.ndarray) -> dict:
    if layer.kind == "conv":
        k = layer.kernel
        n_w = layer.out_ch * layer.in_ch * k * k
        return {
            "weight": flat[:n_w].reshape(layer.out_ch, layer.in_ch, k, k),
            "bias": flat[n_w:],
        }
    if layer.kind == "transposed-conv":
        k = layer.kernel
        n_w = layer.in_ch * layer.out_ch * k * k
        return {
            "weight": flat[:n_w].reshape(layer.in_ch, layer.out_ch, k, k),
            "bias": flat[n_w:],
        }
    if layer.kind == "instance-norm":
        return {"scale": flat[: layer.in_ch], "shift": flat[layer.in_ch :]}
    return {}


def load_generator(path: str) -> GeneratorModel:
    """Read and validate a .gsm file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    end = blob.find(b"\x00", 4)
    if end < 0:
        raise ModelFormatError(f"{path}: unterminated header")
    try:
        header = blob[4:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"{path}: undecodable header: {exc}")

    layers = []
    for lineno, line in enumerate(header.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 6:
            raise ModelFormatError(f"{path}: header line {lineno}: expected 6 fields")
        kind = tokens[0]
        try:
            nums = [int(t) for t in tokens[1:]]
        except ValueError:
            raise ModelFormatError(f"{path}: header line {lineno}: non-integer field")
        layers.append(LayerSpec(kind, *nums))
    validate_architecture(layers)

    payload = blob[end + 1 :]
    if len(payload) % 4 != 0:
        raise ModelFormatError(f"{path}: weight payload not a multiple of 4 bytes")
    flat = np.frombuffer(payload, dtype="<f4")
    expected = sum(layer.param_count() for layer in layers)
    if len(flat) != expected:
        raise ModelFormatError(
            f"{path}: weight count mismatch: expected {expected}, found {len(flat)}"
        )
    if not np.all(np.isfinite(flat)):
        raise ModelFormatError(f"{path}: non-finite weight value")

    params = []
    offset = 0
    for layer in layers:
        n = layer.param_count()
        params.append(_split_params(layer, flat[offset : offset + n].copy()))
        offset += n
    return GeneratorModel(layers, params)


def save_generator(model: GeneratorModel, path: str) -> None:
    """Write a model in the .gsm layout (also used to build test fixtures)."""
    validate_architecture(model.layers)
    header = "\n".join(layer.header_line() for layer in model.layers) + "\n"
    chunks = [MAGIC, header.encode("utf-8"), b"\x00"]
    for layer, p in zip(model.layers, model.params):
        if layer.kind in ("conv", "transposed-conv"):
            order = ("weight", "bias")
        elif layer.kind == "instance-norm":
            order = ("scale", "shift")
        else:
            order = ()
        for name in order:
            arr = np.ascontiguousarray(np.asarray(p[name], dtype="<f4"))
            chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def tiny_preset_layers(base: int = 32, res_blocks: int = 3) -> list[LayerSpec]:
    """Downsized single-channel ResNet generator (7x7 stem, two stride-2
    stages, res_blocks bottleneck blocks, mirrored upsampling, tanh)."""
    L = []
    L.append(LayerSpec("reflection-pad", 1, 1, 0, 0, 3))
    L.append(LayerSpec("conv", 1, base, 7, 1, 0))
    L.append(LayerSpec("instance-norm", base, base))
    L.append(LayerSpec("relu", base, base))
    ch = base
    for _ in range(2):
        L.append(LayerSpec("conv", ch, ch * 2, 3, 2, 1))
        L.append(LayerSpec("instance-norm", ch * 2, ch * 2))
        L.append(LayerSpec("relu", ch * 2, ch * 2))
        ch *= 2
    for _ in range(res_blocks):
        L.append(LayerSpec("residual-block-begin", ch, ch))
        L.append(LayerSpec("reflection-pad", ch, ch, 0, 0, 1))
        L.append(LayerSpec("conv", ch, ch, 3, 1, 0))
        L.append(LayerSpec("instance-norm", ch, ch))
        L.append(LayerSpec("relu", ch, ch))
        L.append(LayerSpec("reflection-pad", ch, ch, 0, 0, 1))
        L.append(LayerSpec("conv", ch, ch, 3, 1, 0))
        L.append(LayerSpec("instance-norm", ch, ch))
        L.append(LayerSpec("residual-block-end", ch, ch))
    for _ in range(2):
        L.append(LayerSpec("transposed-conv", ch, ch // 2, 3, 2, 1))
        L.append(LayerSpec("instance-norm", ch // 2, ch // 2))
        L.append(LayerSpec("relu", ch // 2, ch // 2))
        ch //= 2
    L.append(LayerSpec("reflection-pad", ch, ch, 0, 0, 3))
    L.append(LayerSpec("conv", ch, 1, 7, 1, 0))
    L.append(LayerSpec("tanh", 1, 1))
    return L


def init_params(layers: list[LayerSpec], rng: np.random.Generator = None) -> list[dict]:
    """Gaussian(0, 0.02) conv weights, unit instance-norm, zero biases."""
    if rng is None:
        rng = np.random.default_rng(0)
    params = []
    for layer in layers:
        if layer.kind == "conv":
            shape = (layer.out_ch, layer.in_ch, layer.kernel, layer.kernel)
            params.append({
                "weight": rng.normal(0.0, 0.02, shape).astype(np.float32),
                "bias": np.zeros(layer.out_ch, dtype=np.float32),
            })
        elif layer.kind == "transposed-conv":
            shape = (layer.in_ch, layer.out_ch, layer.kernel, layer.kernel)
            params.append({
                "weight": rng.normal(0.0, 0.02, shape).astype(np.float32),
                "bias": np.zeros(layer.out_ch, dtype=np.float32),
            })
        elif layer.kind == "instance-norm":
            params.append({
                "scale": np.ones(layer.in_ch, dtype=np.float32),
                "shift": np.zeros(layer.in_ch, dtype=np.float32),
            })
        else:
            params.append({})
    return params
