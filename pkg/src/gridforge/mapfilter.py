"""Pre/post-processing chain around the map cleaner.

Raw probability codes are first collapsed to the trinary alphabet by
confidence, weakly connected pixels are dropped, and the result is
resampled to the 256x256 resolution the generator expects. After cleaning,
the inverse resampling snaps values back onto the trinary alphabet.
"""

from __future__ import annotations

import numpy as np

from .gridimage import FREE, OCCUPIED, UNEXPLORED, GridImage

MODEL_SIZE = 256
CONFIDENCE_MARGIN = 38  # codes within this of the midpoint are dropped
_MIDPOINT = 127

# Trinary code -> generator tanh-range value.
CODE_TO_VALUE = {OCCUPIED: -1.0, FREE: 0.6, UNEXPLORED: 1.0}
_ANCHORS = np.array([-1.0, 0.6, 1.0])
_ANCHOR_CODES = np.array([OCCUPIED, FREE, UNEXPLORED], dtype=np.uint8)


def confidence_filter(img: GridImage) -> GridImage:
    """Collapse raw probability codes into the trinary alphabet.

    Explored pixels near the midpoint (|code - 127| < 38, i.e. probability
    within ~0.15 of 0.5) carry too little confidence and revert to
    unexplored; confident pixels round to occupied (high codes -> 0) or
    free (low codes -> 200). Already-trinary images pass through unchanged.
    """
    if img.form == "trinary":
        return img
    px = img.pixels
    out = np.full_like(px, UNEXPLORED)
    explored = px != UNEXPLORED
    codes = px.astype(np.int16)
    out[explored & (codes >= _MIDPOINT + CONFIDENCE_MARGIN)] = OCCUPIED
    out[explored & (codes <= _MIDPOINT - CONFIDENCE_MARGIN)] = FREE
    return GridImage(out, form="trinary")


def remove_floaters(img: GridImage) -> GridImage:
    """Drop weakly connected pixels in a single synchronous pass.

    Every explored pixel with fewer than two 4-neighbors of its own value
    (counted on the input image) becomes unexplored; pixels with two or
    more stay. Unexplored pixels are never touched.
    """
    if img.form != "trinary":
        raise ValueError("remove_floaters expects a trinary image")
    px = img.pixels
    same = np.zeros(px.shape, dtype=np.int8)
    same[1:, :] += (px[1:, :] == px[:-1, :]).astype(np.int8)
    same[:-1, :] += (px[:-1, :] == px[1:, :]).astype(np.int8)
    same[:, 1:] += (px[:, 1:] == px[:, :-1]).astype(np.int8)
    same[:, :-1] += (px[:, :-1] == px[:, 1:]).astype(np.int8)
    out = px.copy()
    out[(px != UNEXPLORED) & (same < 2)] = UNEXPLORED
    return GridImage(out, form="trinary")


def _nn_index(dst: int, src: int) -> np.ndarray:
    # floor(i * src / dst): exact replication/decimation when sizes divide.
    return (np.arange(dst) * src) // dst


def resize_for_model(img: GridImage) -> tuple[np.ndarray, tuple[int, int]]:
    """Nearest-neighbor resample to the generator's input raster.

    Returns a (256, 256) float32 array with codes mapped into the tanh
    range (occupied -1.0, free +0.6, unexplored +1.0) and the original
    (height, width) for restoration.
    """
    if img.form != "trinary":
        raise ValueError("resize_for_model expects a trinary image")
    px = img.pixels
    h, w = px.shape
    resized = px[np.ix_(_nn_index(MODEL_SIZE, h), _nn_index(MODEL_SIZE, w))]
    values = np.empty(resized.shape, dtype=np.float32)
    for code, val in CODE_TO_VALUE.items():
        values[resized == code] = val
    return values, (h, w)


def restore_from_model(raster: np.ndarray, dims: tuple[int, int]) -> GridImage:
    """Map a generator output back to original dimensions and codes.

    Values are resampled to dims with nearest-neighbor and snapped to the
    nearest of the three class anchors. Values outside [-1, 1] by more than
    1e-3 violate the generator's tanh contract.
    """
    raster = np.asarray(raster, dtype=np.float64)
    if raster.shape != (MODEL_SIZE, MODEL_SIZE):
        raise ValueError(f"expected {MODEL_SIZE}x{MODEL_SIZE} raster, got {raster.shape}")
    overflow = max(float(raster.max(initial=-1.0)) - 1.0, -1.0 - float(raster.min(initial=1.0)))
    if overflow > 1e-3:
        raise ValueError(f"model output exceeds [-1, 1] by {overflow:.3g}")
    h, w = dims
    small = raster[np.ix_(_nn_index(h, MODEL_SIZE), _nn_index(w, MODEL_SIZE))]
    nearest = np.argmin(np.abs(small[:, :, None] - _ANCHORS[None, None, :]), axis=2)
    return GridImage(_ANCHOR_CODES[nearest], form="trinary")
