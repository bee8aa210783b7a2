"""Torch modules built from layer descriptor lists, plus the PatchGAN
discriminator. The generator tracks which descriptor produced which module
so weight export stays a mechanical walk."""

from __future__ import annotations

import torch
import torch.nn as nn

from .presets import Layer

INSTANCE_NORM_EPS = 1e-5


class ResidualBlock(nn.Module):
    def __init__(self, inner: nn.Sequential):
        super().__init__()
        self.inner = inner

    def forward(self, x):
        return x + self.inner(x)


def _make_module(layer: Layer) -> nn.Module:
    if layer.kind == "conv":
        return nn.Conv2d(layer.in_ch, layer.out_ch, layer.kernel,
                         stride=layer.stride, padding=layer.pad)
    if layer.kind == "transposed-conv":
        opad = layer.stride + 2 * layer.pad - layer.kernel
        return nn.ConvTranspose2d(layer.in_ch, layer.out_ch, layer.kernel,
                                  stride=layer.stride, padding=layer.pad,
                                  output_padding=opad)
    if layer.kind == "instance-norm":
        return nn.InstanceNorm2d(layer.in_ch, affine=True, eps=INSTANCE_NORM_EPS,
                                 track_running_stats=False)
    if layer.kind == "relu":
        return nn.ReLU(inplace=False)
    if layer.kind == "tanh":
        return nn.Tanh()
    if layer.kind == "reflection-pad":
        return nn.ReflectionPad2d(layer.pad)
    raise ValueError(f"unexpected layer kind {layer.kind!r}")


class Generator(nn.Module):
    """Generator assembled from a descriptor list.

    `parameterized` pairs every weight-carrying descriptor with its module
    in serialization order. Features for the contrastive loss are taken
    after each stride-2 stage's activation and after the middle residual
    block (the encoder half of the network).
    """

    def __init__(self, layers: list[Layer]):
        super().__init__()
        self.layers = layers
        self.parameterized: list[tuple[Layer, nn.Module]] = []
        modules = []
        stack = []
        for layer in layers:
            if layer.kind == "residual-block-begin":
                stack.append([])
                continue
            if layer.kind == "residual-block-end":
                inner = stack.pop()
                block = ResidualBlock(nn.Sequential(*inner))
                (stack[-1] if stack else modules).append(block)
                continue
            mod = _make_module(layer)
            if layer.param_count():
                self.parameterized.append((layer, mod))
            (stack[-1] if stack else modules).append(mod)
        if stack:
            raise ValueError("unclosed residual block")
        self.body = nn.Sequential(*modules)
        self.feature_taps = self._find_feature_taps()

    def _find_feature_taps(self) -> list[int]:
        taps = []
        strided = [i for i, m in enumerate(self.body)
                   if isinstance(m, nn.Conv2d) and m.stride[0] > 1]
        for i in strided:
            j = i
            while j + 1 < len(self.body) and isinstance(
                self.body[j + 1], (nn.InstanceNorm2d, nn.ReLU)
            ):
                j += 1
            taps.append(j)
        blocks = [i for i, m in enumerate(self.body) if isinstance(m, ResidualBlock)]
        if blocks:
            taps.append(blocks[len(blocks) // 2])
        return sorted(taps)

    def forward(self, x, extract_features: bool = False):
        feats = []
        for i, mod in enumerate(self.body):
            x = mod(x)
            if extract_features and i in self.feature_taps:
                feats.append(x)
        if extract_features:
            return x, feats
        return x

    def encode(self, x):
        """Features only; runs just the encoder prefix."""
        feats = []
        last = self.feature_taps[-1]
        for i, mod in enumerate(self.body):
            x = mod(x)
            if i in self.feature_taps:
                feats.append(x)
            if i == last:
                break
        return feats


class PatchDiscriminator(nn.Module):
    """70x70 receptive-field convolutional classifier over local patches."""

    def __init__(self, base: int = 64):
        super().__init__()
        layers = [
            nn.Conv2d(1, base, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=False),
        ]
        ch = base
        for mult in (2, 4):
            layers += [
                nn.Conv2d(ch, base * mult, 4, stride=2, padding=1),
                nn.InstanceNorm2d(base * mult, affine=True, eps=INSTANCE_NORM_EPS),
                nn.LeakyReLU(0.2, inplace=False),
            ]
            ch = base * mult
        layers += [
            nn.Conv2d(ch, base * 8, 4, stride=1, padding=1),
            nn.InstanceNorm2d(base * 8, affine=True, eps=INSTANCE_NORM_EPS),
            nn.LeakyReLU(0.2, inplace=False),
            nn.Conv2d(base * 8, 1, 4, stride=1, padding=1),
        ]
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class ProjectionHead(nn.Module):
    """Per-layer two-layer MLP mapping patch features to the unit sphere."""

    def __init__(self, in_dims: list[int], out_dim: int = 256):
        super().__init__()
        self.mlps = nn.ModuleList([
            nn.Sequential(nn.Linear(d, out_dim), nn.ReLU(), nn.Linear(out_dim, out_dim))
            for d in in_dims
        ])

    def forward(self, layer_index: int, patches: torch.Tensor) -> torch.Tensor:
        z = self.mlps[layer_index](patches)
        return z / (z.norm(dim=-1, keepdim=True) + 1e-8)


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.weight is not None:
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
