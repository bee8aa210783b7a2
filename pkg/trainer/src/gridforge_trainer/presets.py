"""Generator architecture descriptions shared with the inference side.

A model is an ordered list of layer descriptors matching the .gsm header
line format ``kind in_ch out_ch kernel stride pad``. The trainer builds
torch modules from the list and serializes weights in the same order, so
a file's header always reflects the module structure exactly.
"""

from dataclasses import dataclass

KINDS = (
    "conv",
    "transposed-conv",
    "instance-norm",
    "relu",
    "tanh",
    "residual-block-begin",
    "residual-block-end",
    "reflection-pad",
)


@dataclass(frozen=True)
class Layer:
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


def resnet_generator(base: int, res_blocks: int) -> list[Layer]:
    """Single-channel ResNet generator: 7x7 stem, two stride-2 stages,
    res_blocks bottleneck blocks, mirrored upsampling, tanh output."""
    L = [
        Layer("reflection-pad", 1, 1, 0, 0, 3),
        Layer("conv", 1, base, 7, 1, 0),
        Layer("instance-norm", base, base),
        Layer("relu", base, base),
    ]
    ch = base
    for _ in range(2):
        L += [
            Layer("conv", ch, ch * 2, 3, 2, 1),
            Layer("instance-norm", ch * 2, ch * 2),
            Layer("relu", ch * 2, ch * 2),
        ]
        ch *= 2
    for _ in range(res_blocks):
        L += [
            Layer("residual-block-begin", ch, ch),
            Layer("reflection-pad", ch, ch, 0, 0, 1),
            Layer("conv", ch, ch, 3, 1, 0),
            Layer("instance-norm", ch, ch),
            Layer("relu", ch, ch),
            Layer("reflection-pad", ch, ch, 0, 0, 1),
            Layer("conv", ch, ch, 3, 1, 0),
            Layer("instance-norm", ch, ch),
            Layer("residual-block-end", ch, ch),
        ]
    for _ in range(2):
        L += [
            Layer("transposed-conv", ch, ch // 2, 3, 2, 1),
            Layer("instance-norm", ch // 2, ch // 2),
            Layer("relu", ch // 2, ch // 2),
        ]
        ch //= 2
    L += [
        Layer("reflection-pad", ch, ch, 0, 0, 3),
        Layer("conv", ch, 1, 7, 1, 0),
        Layer("tanh", 1, 1),
    ]
    return L


PRESETS = {
    "tiny": lambda: resnet_generator(base=32, res_blocks=3),
    "full": lambda: resnet_generator(base=64, res_blocks=9),
}
