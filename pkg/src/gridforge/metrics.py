"""Map quality scoring: per-class IoU, SSIM, pixel accuracy.

SSIM follows the canonical single-scale formulation (11x11 Gaussian window,
sigma 1.5, C1 = (0.01*255)^2, C2 = (0.03*255)^2) evaluated on the 8-bit
codes. IoU over an empty union is defined as 1.0: both maps agree the
class is absent.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .gridimage import FREE, OCCUPIED, GridImage

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


@dataclass(frozen=True)
class EvalReport:
    iou_occupied: float
    iou_free: float
    ssim: float
    pixel_accuracy: float
    sample_id: str = ""

    def __post_init__(self):
        for name in ("iou_occupied", "iou_free", "pixel_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 or np.isnan(v):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not -1.0 <= self.ssim <= 1.0 or np.isnan(self.ssim):
            raise ValueError(f"ssim={self.ssim} outside [-1, 1]")

    def row(self) -> list:
        return [
            self.sample_id,
            self.iou_occupied,
            self.iou_free,
            self.ssim,
            self.pixel_accuracy,
        ]


def iou(pred: GridImage, gt: GridImage, class_code: int) -> float:
    """Intersection over union of one class; empty union counts as 1.0."""
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError(
            f"dimension mismatch {pred.pixels.shape} vs {gt.pixels.shape}"
        )
    p = pred.pixels == class_code
    g = gt.pixels == class_code
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a: GridImage, b: GridImage) -> float:
    """Mean single-scale SSIM over valid 11x11 Gaussian windows.

    Constant regions score via the stabilizing constants (zero variance is
    handled by C2, no special casing needed).
    """
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"dimension mismatch {a.pixels.shape} vs {b.pixels.shape}")
    h, w = a.pixels.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    x = a.pixels.astype(np.float64)
    y = b.pixels.astype(np.float64)
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)

    def filt(img):
        return ndimage.convolve(img, kernel, mode="constant")

    crop = SSIM_WINDOW // 2
    mu_x = filt(x)[crop:-crop, crop:-crop]
    mu_y = filt(y)[crop:-crop, crop:-crop]
    sxx = filt(x * x)[crop:-crop, crop:-crop] - mu_x * mu_x
    syy = filt(y * y)[crop:-crop, crop:-crop] - mu_y * mu_y
    sxy = filt(x * y)[crop:-crop, crop:-crop] - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


def pixel_accuracy(pred: GridImage, gt: GridImage) -> float:
    if pred.pixels.shape != gt.pixels.shape:
        raise ValueError("dimension mismatch")
    return float((pred.pixels == gt.pixels).mean())


def evaluate_pair(pred: GridImage, gt: GridImage, sample_id: str = "") -> EvalReport:
    return EvalReport(
        iou_occupied=iou(pred, gt, OCCUPIED),
        iou_free=iou(pred, gt, FREE),
        ssim=ssim(pred, gt),
        pixel_accuracy=pixel_accuracy(pred, gt),
        sample_id=sample_id,
    )


def mean_report(reports: list[EvalReport]) -> EvalReport:
    if not reports:
        raise ValueError("no reports to average")
    return EvalReport(
        iou_occupied=float(np.mean([r.iou_occupied for r in reports])),
        iou_free=float(np.mean([r.iou_free for r in reports])),
        ssim=float(np.mean([r.ssim for r in reports])),
        pixel_accuracy=float(np.mean([r.pixel_accuracy for r in reports])),
        sample_id="mean",
    )


HEADER = ["id", "iou_occupied", "iou_free", "ssim", "pixel_accuracy"]


def format_reports(reports: list[EvalReport], as_csv: bool = False) -> str:
    """Line-oriented text or CSV, one row per report."""
    if as_csv:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(HEADER)
        for r in reports:
            writer.writerow([r.sample_id] + [f"{v:.6f}" for v in r.row()[1:]])
        return buf.getvalue()
    lines = []
    for r in reports:
        lines.append(
            f"{r.sample_id or '-'}: iou_occupied={r.iou_occupied:.4f} "
            f"iou_free={r.iou_free:.4f} ssim={r.ssim:.4f} "
            f"pixel_accuracy={r.pixel_accuracy:.4f}"
        )
    return "\n".join(lines) + "\n"
