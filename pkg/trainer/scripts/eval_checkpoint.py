#!/usr/bin/env python3
"""Score a .gsm generator on validation pairs with the SLAM-side pipeline.

Reports the mean (iou_occupied + iou_free)/2 gain of the cleaned output
over the erroneous input, which is the number the cleaning stage is
ultimately judged by.
"""

import argparse
import os
import sys

import numpy as np

from gridforge import metrics
from gridforge.cleaner import MorphologicalCleaner, NeuralCleaner, clean_image
from gridforge.gridimage import FREE, OCCUPIED, load_image


def mean_iou(img, gt):
    return 0.5 * (metrics.iou(img, gt, OCCUPIED) + metrics.iou(img, gt, FREE))


def evaluate(model_path: str, val_dir: str, limit: int = None):
    names = sorted(n for n in os.listdir(val_dir) if n.endswith("_err.png"))
    if limit:
        names = names[:limit]
    cleaner = NeuralCleaner(model_path) if model_path != "morph" else MorphologicalCleaner()
    gains, ssims = [], []
    for name in names:
        err = load_image(os.path.join(val_dir, name))
        gt = load_image(os.path.join(val_dir, name.replace("_err", "_clean")))
        base = mean_iou(err, gt)
        out = clean_image(err, cleaner)
        gains.append(mean_iou(out, gt) - base)
        ssims.append(metrics.ssim(out, gt))
    return float(np.mean(gains)), float(np.min(gains)), float(np.mean(ssims))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("model", help=".gsm path, or 'morph' for the baseline")
    parser.add_argument("val_dir")
    parser.add_argument("--limit", type=int, default=None)
    args = parser.parse_args()
    mean_gain, min_gain, mean_ssim = evaluate(args.model, args.val_dir, args.limit)
    print(f"{args.model}: mean_gain={mean_gain:+.4f} min_gain={min_gain:+.4f} "
          f"ssim_vs_clean={mean_ssim:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
