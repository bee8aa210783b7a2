"""8-bit raster exchange form of occupancy grids.

Two value conventions share the container:
  raw     -- codes 0..254 quantize occupancy probability, 255 = unexplored
  trinary -- exactly {0 occupied, 200 free, 255 unexplored}
Note the direction flip between the two: raw code 254 (p ~ 1) classifies as
occupied, which is trinary code 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

OCCUPIED = 0
FREE = 200
UNEXPLORED = 255
TRINARY_CODES = (OCCUPIED, FREE, UNEXPLORED)


@dataclass(frozen=True)
class GridImage:
    pixels: np.ndarray
    form: str = "trinary"

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("grid image must be a 2D array with positive dimensions")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        if self.form not in ("raw", "trinary"):
            raise ValueError(f"unknown grid image form {self.form!r}")
        if self.form == "trinary":
            bad = ~np.isin(px, TRINARY_CODES)
            if bad.any():
                vals = np.unique(px[bad])[:5]
                raise ValueError(f"trinary image contains foreign codes {vals.tolist()}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def is_trinary(pixels: np.ndarray) -> bool:
    return bool(np.isin(pixels, TRINARY_CODES).all())


def save_png(img: GridImage, path: str) -> None:
    Image.fromarray(img.pixels, mode="L").save(path, format="PNG")


def load_image(path: str, form: str = None) -> GridImage:
    """Read an 8-bit grayscale PGM/PNG. Form is sniffed unless given."""
    with Image.open(path) as im:
        px = np.asarray(im.convert("L"), dtype=np.uint8)
    if form is None:
        form = "trinary" if is_trinary(px) else "raw"
    return GridImage(px, form=form)


def save_pgm(img: GridImage, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(img.pixels.tobytes())


def load_pgm(path: str, form: str = None) -> GridImage:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; comments allowed between tokens.
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        tok = b""
        while pos < len(data) and not data[pos : pos + 1].isspace():
            tok += data[pos : pos + 1]
            pos += 1
        tokens.append(tok)
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ValueError(f"{path}: expected 8-bit PGM, maxval {maxval}")
    pos += 1  # single whitespace after maxval
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    px = raster.reshape(height, width).copy()
    if form is None:
        form = "trinary" if is_trinary(px) else "raw"
    return GridImage(px, form=form)
