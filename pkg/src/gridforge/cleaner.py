"""Pluggable map cleaning: generator inference from serialized weights, or
a deterministic morphological baseline, wrapped in the filter chain.

The neural path runs the convolutional generator in plain numpy (float32
GEMMs over tap-gathered columns; polyphase decomposition for strided
transposed convolutions; a cached-kernel FFT path for wide kernels whose
column matrix would not fit comfortably in cache). Inference needs nothing
beyond the weight file. The full chain is: snapshot -> confidence filter ->
floater removal -> resize to 256x256 -> cleaner -> restore to original
dimensions. Cleaning never touches SLAM state; it consumes snapshots and
produces images.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy import fft as sfft
from scipy import ndimage
from threadpoolctl import threadpool_limits

from . import mapfilter
from .gridimage import FREE, OCCUPIED, UNEXPLORED, GridImage
from .gsm import INSTANCE_NORM_EPS, GeneratorModel, load_generator

__all__ = [
    "MorphologicalCleaner",
    "NeuralCleaner",
    "clean_image",
    "clean_map",
    "forward",
    "load_generator",
    "morphological_clean",
]

_IM2COL_LIMIT = 64 << 20  # bytes of column matrix before switching strategy

_tls = threading.local()


def _thread_workspace() -> dict:
    """Per-thread scratch pool so repeated passes skip large reallocations."""
    ws = getattr(_tls, "ws", None)
    if ws is None:
        ws = _tls.ws = {}
    return ws


def _pad_zeros(x: np.ndarray, p: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.zeros((c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, p : p + h, p : p + w] = x
    return out


def _pad_reflect(x: np.ndarray, p: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.empty((c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, p : p + h, p : p + w] = x
    out[:, :p, p : p + w] = x[:, p:0:-1, :]
    out[:, p + h :, p : p + w] = x[:, h - 2 : h - 2 - p : -1, :]
    out[:, :, :p] = out[:, :, 2 * p : p : -1]
    out[:, :, p + w :] = out[:, :, p + w - 2 : w - 2 : -1]
    return out


def _scratch(workspace: dict, key, shape) -> np.ndarray:
    """Reused float32 buffer; avoids repeated large page-faulting allocations."""
    if workspace is None:
        return np.empty(shape, dtype=np.float32)
    buf = workspace.get(key)
    need = int(np.prod(shape))
    if buf is None or buf.size < need:
        buf = np.empty(need, dtype=np.float32)
        workspace[key] = buf
    return buf[:need].reshape(shape)


def _conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, pad: int,
            fft_cache: dict = None, workspace: dict = None) -> np.ndarray:
    """Strided cross-correlation. x: (C, H, W), w: (O, C, k, k)."""
    if pad:
        x = _pad_zeros(x, pad)
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    n = ho * wo
    hi = (ho - 1) * stride + 1
    wi = (wo - 1) * stride + 1

    col_bytes = k * k * c * n * 4
    if stride == 1 and k >= 5 and col_bytes > _IM2COL_LIMIT:
        return _conv_fft(x, w, b, fft_cache)
    if stride == 1 and k == 3 and c >= 16 and o >= 16 and ho % 2 == 0 and wo % 2 == 0:
        return _conv_winograd(x, w, b, fft_cache, workspace)
    if stride > 1:
        # Gather the s^2 sub-lattices once so tap copies are unit-strided.
        planes = {}
        for a in range(stride):
            for bb in range(stride):
                ph = x[:, a::stride, bb::stride]
                buf = _scratch(workspace, ("plane", a, bb), ph.shape)
                buf[...] = ph
                planes[(a, bb)] = buf
    if col_bytes <= _IM2COL_LIMIT:
        cols = _scratch(workspace, "cols", (k * k, c, n))
        t = 0
        for di in range(k):
            for dj in range(k):
                if stride > 1:
                    ph = planes[(di % stride, dj % stride)]
                    cols[t] = ph[:, di // stride : di // stride + ho,
                                 dj // stride : dj // stride + wo].reshape(c, n)
                else:
                    cols[t] = x[:, di : di + hi, dj : dj + wi].reshape(c, n)
                t += 1
        w2 = fft_cache.get("_w2") if fft_cache is not None else None
        if w2 is None:
            w2 = np.ascontiguousarray(w.transpose(0, 2, 3, 1)).reshape(o, k * k * c)
            if fft_cache is not None:
                fft_cache["_w2"] = w2
        # (N, K) @ (K, O) runs measurably faster here than (O, K) @ (K, N);
        # BLAS consumes the transposes as flags, no copies happen
        out_no = cols.reshape(k * k * c, n).T @ w2.T
        out_no += b[None, :]
        return np.ascontiguousarray(out_no.T).reshape(o, ho, wo)
    out = np.zeros((o, n), dtype=np.float32)
    for di in range(k):
        for dj in range(k):
            slab = x[:, di : di + hi : stride, dj : dj + wi : stride].reshape(c, n)
            out += w[:, :, di, dj] @ slab
    out += b[:, None]
    return out.reshape(o, ho, wo)


def _conv_winograd(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   cache: dict = None, workspace: dict = None) -> np.ndarray:
    """F(2x2, 3x3) Winograd for dense stride-1 3x3 layers.

    2.25x fewer multiplies than direct evaluation; transforms are the
    standard B/G/A triple applied as explicit plane arithmetic. Kernel
    transforms are cached per layer.
    """
    c, h, wd = x.shape
    o = w.shape[0]
    ho, wo = h - 2, wd - 2
    th, tw = ho // 2, wo // 2
    n = th * tw

    U = cache.get("_wino") if cache is not None else None
    if U is None:
        G = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.5, -0.5, 0.5], [0.0, 0.0, 1.0]],
                     dtype=np.float32)
        U = np.einsum("iu,ocuv,jv->ijoc", G, w, G).reshape(16, o, c)  # (16, O, C)
        U = np.ascontiguousarray(U)
        if cache is not None:
            cache["_wino"] = U

    # 16 shifted planes of the input lattice, flattened per tile.
    d = _scratch(workspace, "wino_d", (4, 4, c, n))
    for u in range(4):
        for v in range(4):
            d[u, v] = x[:, u : u + 2 * th : 2, v : v + 2 * tw : 2].reshape(c, n)

    # V = B^T d B, rows then columns (B^T rows: d0-d2, d1+d2, d2-d1, d1-d3).
    r = _scratch(workspace, "wino_r", (4, 4, c, n))
    r[0] = d[0] - d[2]
    r[1] = d[1] + d[2]
    r[2] = d[2] - d[1]
    r[3] = d[1] - d[3]
    V = _scratch(workspace, "wino_v", (4, 4, c, n))
    V[:, 0] = r[:, 0] - r[:, 2]
    V[:, 1] = r[:, 1] + r[:, 2]
    V[:, 2] = r[:, 2] - r[:, 1]
    V[:, 3] = r[:, 1] - r[:, 3]

    # transposed orientation (N, C) @ (C, O): faster on this BLAS
    M = _scratch(workspace, "wino_m", (16, n, o))
    np.matmul(V.reshape(16, c, n).transpose(0, 2, 1), U.transpose(0, 2, 1), out=M)
    M = M.reshape(4, 4, n, o)

    # y = A^T M A (A^T rows: m0+m1+m2, m1-m2-m3).
    s0 = M[0] + M[1] + M[2]
    s1 = M[1] - M[2] - M[3]
    y00 = s0[0] + s0[1] + s0[2]
    y01 = s0[1] - s0[2] - s0[3]
    y10 = s1[0] + s1[1] + s1[2]
    y11 = s1[1] - s1[2] - s1[3]

    out = np.empty((o, ho, wo), dtype=np.float32)
    out[:, 0::2, 0::2] = y00.T.reshape(o, th, tw)
    out[:, 0::2, 1::2] = y01.T.reshape(o, th, tw)
    out[:, 1::2, 0::2] = y10.T.reshape(o, th, tw)
    out[:, 1::2, 1::2] = y11.T.reshape(o, th, tw)
    out += b[:, None, None]
    return out


def _fft_workers() -> int:
    import os

    cap = os.environ.get("GRIDFORGE_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _conv_fft(x: np.ndarray, w: np.ndarray, b: np.ndarray, cache: dict = None) -> np.ndarray:
    """Valid-region correlation via FFT; kernel spectra are cacheable."""
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    s1 = sfft.next_fast_len(h + k - 1)
    s2 = sfft.next_fast_len(wd + k - 1)
    key = ("fft", s1, s2)
    spectra = cache.get(key) if cache is not None else None
    if spectra is None:
        flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1]).astype(np.float32)
        spectra = sfft.rfft2(flipped, (s1, s2), workers=_fft_workers())
        if cache is not None:
            cache[key] = spectra
    X = sfft.rfft2(x, (s1, s2), workers=_fft_workers())
    Y = np.einsum("chw,ochw->ohw", X, spectra)
    y = sfft.irfft2(Y, (s1, s2), workers=_fft_workers())[:, k - 1 : h, k - 1 : wd]
    return (y + b[:, None, None]).astype(np.float32)


def _transposed_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                       stride: int, pad: int, workspace: dict = None,
                       cache: dict = None) -> np.ndarray:
    """Transposed convolution upsampling exactly by `stride`.

    w: (C_in, C_out, k, k). Evaluated per output phase (polyphase
    decomposition of the zero-stuffed equivalent), so no stuffed buffer is
    built; the implicit output padding is stride + 2*pad - k.
    """
    c, h, wd = x.shape
    _, o, k, _ = w.shape
    s = stride
    lead = k - 1 - pad
    wf = w[:, :, ::-1, ::-1]
    margin = k // s + 2
    xp = _pad_zeros(x, margin)
    n = h * wd
    out = np.empty((o, h * s, wd * s), dtype=np.float32)
    for a in range(s):
        row_taps = [t for t in range(k) if (a + t - lead) % s == 0]
        for bb in range(s):
            col_taps = [u for u in range(k) if (bb + u - lead) % s == 0]
            taps = [(t, u) for t in row_taps for u in col_taps]
            cols = _scratch(workspace, "tcols", (len(taps), c, n))
            for idx, (t, u) in enumerate(taps):
                di = margin + (a + t - lead) // s
                dj = margin + (bb + u - lead) // s
                cols[idx] = xp[:, di : di + h, dj : dj + wd].reshape(c, n)
            w2 = cache.get(("_w2", a, bb)) if cache is not None else None
            if w2 is None:
                w2 = np.ascontiguousarray(
                    np.stack([wf[:, :, t, u] for (t, u) in taps]).transpose(2, 0, 1)
                ).reshape(o, len(taps) * c)
                if cache is not None:
                    cache[("_w2", a, bb)] = w2
            phase = cols.reshape(len(taps) * c, n).T @ w2.T
            phase += b[None, :]
            out[:, a::s, bb::s] = np.ascontiguousarray(phase.T).reshape(o, h, wd)
    return out


def _instance_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Normalize per channel over the spatial axes, in place."""
    c = x.shape[0]
    flat = x.reshape(c, -1)
    flat -= flat.mean(axis=1)[:, None]
    var = np.einsum("cn,cn->c", flat, flat) / flat.shape[1]
    gain = (scale / np.sqrt(var + INSTANCE_NORM_EPS)).astype(np.float32)
    flat *= gain[:, None]
    flat += shift.astype(np.float32)[:, None]
    return x


def forward(model: GeneratorModel, image: np.ndarray) -> np.ndarray:
    """Run the generator on a (256, 256) raster in [-1, 1].

    Deterministic; instance norm always uses the sample's own statistics.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.shape != (mapfilter.MODEL_SIZE, mapfilter.MODEL_SIZE):
        raise ValueError(f"expected {mapfilter.MODEL_SIZE}^2 input, got {image.shape}")
    # The GEMMs here are small enough that BLAS thread fan-out costs more
    # than it saves; pin to one thread for the duration of the pass.
    with threadpool_limits(limits=1, user_api="blas"):
        return _forward_layers(model, image)


def _forward_layers(model: GeneratorModel, image: np.ndarray) -> np.ndarray:
    # conv outputs are fresh buffers, so the pointwise stages (norm, relu,
    # tanh) may mutate them in place without aliasing the residual stash.
    # The caller's buffer is copied so the same holds at the input.
    x = np.array(image, dtype=np.float32)[None, :, :]
    stack = []
    workspace = _thread_workspace()
    for layer, p in zip(model.layers, model.params):
        kind = layer.kind
        if kind == "conv":
            x = _conv2d(x, p["weight"], p["bias"], layer.stride, layer.pad,
                        fft_cache=p, workspace=workspace)
        elif kind == "transposed-conv":
            x = _transposed_conv2d(x, p["weight"], p["bias"], layer.stride, layer.pad,
                                   workspace=workspace, cache=p)
        elif kind == "instance-norm":
            x = _instance_norm(x, p["scale"], p["shift"])
        elif kind == "relu":
            np.maximum(x, np.float32(0.0), out=x)
        elif kind == "tanh":
            np.tanh(x, out=x)
        elif kind == "reflection-pad":
            x = _pad_reflect(x, layer.pad)
        elif kind == "residual-block-begin":
            stack.append(x)
        elif kind == "residual-block-end":
            x = x + stack.pop()
    return x[0]


_ANCHORS = np.array([-1.0, 0.6, 1.0], dtype=np.float32)
_ANCHOR_CODES = np.array([OCCUPIED, FREE, UNEXPLORED], dtype=np.uint8)


def morphological_clean(raster: np.ndarray, min_area: int = 4) -> np.ndarray:
    """Deterministic baseline on a trinary-coded tanh raster.

    Per class, connected components (8-connectivity) smaller than min_area
    are reverted to unexplored; the occupied class then gets a 3x3 closing
    to bridge single-pixel wall gaps.
    """
    raster = np.asarray(raster, dtype=np.float32)
    nearest = np.argmin(np.abs(raster[:, :, None] - _ANCHORS[None, None, :]), axis=2)
    codes = _ANCHOR_CODES[nearest]
    eight = np.ones((3, 3), dtype=bool)
    for code in (OCCUPIED, FREE):
        mask = codes == code
        labels, n = ndimage.label(mask, structure=eight)
        if n:
            sizes = np.bincount(labels.ravel())
            small = sizes < min_area
            small[0] = False
            codes[small[labels]] = UNEXPLORED
    occ = codes == OCCUPIED
    closed = ndimage.binary_closing(occ, structure=eight)
    codes[closed & ~occ] = OCCUPIED
    out = np.empty(raster.shape, dtype=np.float32)
    for code, val in mapfilter.CODE_TO_VALUE.items():
        out[codes == code] = val
    return out


class NeuralCleaner:
    """Generator inference from a loaded or on-disk .gsm model."""

    def __init__(self, model):
        if isinstance(model, (str, bytes)):
            model = load_generator(model)
        self.model = model

    def apply(self, raster: np.ndarray) -> np.ndarray:
        return forward(self.model, raster)


class MorphologicalCleaner:
    def __init__(self, min_area: int = 4):
        self.min_area = min_area

    def apply(self, raster: np.ndarray) -> np.ndarray:
        return morphological_clean(raster, self.min_area)


def clean_image(img: GridImage, cleaner) -> GridImage:
    """Filter chain + cleaner for a standalone grid image.

    Raw-form images are confidence-filtered first; trinary images pass
    straight to floater removal. Output has the input's dimensions.
    """
    trinary = mapfilter.confidence_filter(img)
    trinary = mapfilter.remove_floaters(trinary)
    raster, dims = mapfilter.resize_for_model(trinary)
    cleaned = cleaner.apply(raster)
    return mapfilter.restore_from_model(cleaned, dims)


def clean_map(grid, cleaner) -> GridImage:
    """Snapshot an occupancy grid and run the cleaning chain on it.

    Pose trail, resolution and origin are untouched; the result is a
    trinary image with the grid's dimensions.
    """
    if grid.width < 1 or grid.height < 1:
        raise ValueError("grid is empty")
    return clean_image(grid.snapshot_trinary(), cleaner)
