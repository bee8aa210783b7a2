#!/usr/bin/env python3
# The cleaning chain end to end: confidence filtering, floater removal, and
# a pluggable cleaner (morphological baseline here; pass a .gsm path to use
# a trained generator), scored against the aligned ground truth.

import os
import sys

import numpy as np

from gridforge import ErrorConfig, explore_and_map, generate_floorplan
from gridforge.cleaner import MorphologicalCleaner, NeuralCleaner, clean_image
from gridforge.gridimage import FREE, OCCUPIED, save_png
from gridforge.metrics import evaluate_pair, iou

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

plan = generate_floorplan(seed=21)
pair = explore_and_map(plan, ErrorConfig(rng_seed=4))

cleaner = MorphologicalCleaner()
label = "morphological"
if len(sys.argv) > 1:  # optional: demos/05_map_cleaning.py path/to/model.gsm
    cleaner = NeuralCleaner(sys.argv[1])
    label = f"neural ({os.path.basename(sys.argv[1])})"

cleaned = clean_image(pair.erroneous, cleaner)
save_png(cleaned, os.path.join(OUT, "cleaned.png"))


def miou(img):
    return 0.5 * (iou(img, pair.clean, OCCUPIED) + iou(img, pair.clean, FREE))


before = evaluate_pair(pair.erroneous, pair.clean, "erroneous")
after = evaluate_pair(cleaned, pair.clean, "cleaned")
print(f"cleaner: {label}")
print(f"before: iou_occ={before.iou_occupied:.3f} iou_free={before.iou_free:.3f} "
      f"ssim={before.ssim:.3f}")
print(f"after:  iou_occ={after.iou_occupied:.3f} iou_free={after.iou_free:.3f} "
      f"ssim={after.ssim:.3f}")
print(f"mean IoU gain: {miou(cleaned) - miou(pair.erroneous):+.4f}")
print(f"wrote {OUT}/cleaned.png")
