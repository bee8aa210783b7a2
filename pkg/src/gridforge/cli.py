"""Command-line driver: replayed SLAM, standalone cleaning, dataset
generation, and evaluation.

Exit codes: 0 success, 1 for I/O or configuration errors (including bad
usage), 2 when registration collapses mid-run (partial outputs are still
written).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import errorsim, metrics, pointcloud
from .cleaner import MorphologicalCleaner, NeuralCleaner, clean_image
from .gridimage import load_image, load_pgm, save_png
from .gsm import load_generator
from .mapping import save_grid
from .session import Session, SessionConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config/usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise CliError(message)


class CliError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="gridforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_slam = sub.add_parser("slam", parents=[], help="replay a point-cloud sequence into maps")
    p_slam.add_argument("input_dir", help="directory of ASCII point-cloud frames")
    p_slam.add_argument("out_prefix", help="output path prefix")
    p_slam.add_argument("--config", help="session config file (key: value lines)")
    group = p_slam.add_mutually_exclusive_group()
    group.add_argument("--model", help="neural cleaner weights (.gsm)")
    group.add_argument("--morph", action="store_true", help="morphological cleaner")
    group.add_argument("--no-clean", action="store_true", help="skip cleaning")
    p_slam.add_argument("--realtime", action="store_true",
                        help="replay at frame timestamps, log per-frame latency")

    p_clean = sub.add_parser("clean", help="clean a single grid image")
    p_clean.add_argument("input_image", help="8-bit PGM/PNG grid image")
    p_clean.add_argument("out_path", help="output PNG path")
    cgroup = p_clean.add_mutually_exclusive_group(required=True)
    cgroup.add_argument("--model", help="neural cleaner weights (.gsm)")
    cgroup.add_argument("--morph", action="store_true", help="morphological cleaner")

    p_data = sub.add_parser("dataset", help="generate paired (erroneous, clean) samples")
    p_data.add_argument("count", type=int)
    p_data.add_argument("out_dir")
    p_data.add_argument("--seed", type=int, default=0)
    p_data.add_argument("--size", type=int, default=256, help="plan raster size in cells")
    p_data.add_argument("--completion", nargs=2, type=float, default=(0.3, 1.0),
                        metavar=("LO", "HI"))
    p_data.add_argument("--noise", nargs=2, type=float, default=(0.0, 0.05),
                        metavar=("LO", "HI"))
    p_data.add_argument("--linear-drift", nargs=2, type=float, default=(0.0, 0.02),
                        metavar=("LO", "HI"))
    p_data.add_argument("--angular-drift", nargs=2, type=float,
                        default=(0.0, np.deg2rad(1.0)), metavar=("LO", "HI"),
                        help="radians per meter traveled")
    p_data.add_argument("--accidental", nargs=2, type=float, default=(0.0, 0.1),
                        metavar=("LO", "HI"))

    p_eval = sub.add_parser("eval", help="score maps against ground truth")
    p_eval.add_argument("pred", nargs="?", help="predicted image (or use --manifest)")
    p_eval.add_argument("gt", nargs="?", help="ground-truth image")
    p_eval.add_argument("--manifest", help="errorsim manifest for batch mode")
    p_eval.add_argument("--pred-dir",
                        help="directory of cleaned images named <id>.png replacing the "
                             "erroneous side in batch mode")
    p_eval.add_argument("--csv", action="store_true", help="CSV output")

    p_info = sub.add_parser("info", help="describe a model, map image, or manifest")
    p_info.add_argument("path")
    return parser


def _load_grid_image(path: str):
    if not os.path.isfile(path):
        raise CliError(f"image not found: {path}")
    if path.endswith(".pgm"):
        return load_pgm(path)
    return load_image(path)


def _make_cleaner(args):
    if getattr(args, "no_clean", False):
        return None
    if args.model:
        if not os.path.isfile(args.model):
            raise CliError(f"model file not found: {args.model}")
        return NeuralCleaner(load_generator(args.model))
    if args.morph:
        return MorphologicalCleaner()
    return None


def cmd_slam(args) -> int:
    if not os.path.isdir(args.input_dir):
        raise CliError(f"input directory not found: {args.input_dir}")
    config = SessionConfig.from_file(args.config) if args.config else SessionConfig()
    cleaner = _make_cleaner(args)
    frames = pointcloud.load_sequence(args.input_dir)
    out_dir = os.path.dirname(os.path.abspath(args.out_prefix))
    os.makedirs(out_dir, exist_ok=True)

    session = Session(config, cleaner)
    collapsed = False
    prev_ts = None
    for cloud in frames:
        if args.realtime and prev_ts is not None:
            time.sleep(max(0.0, cloud.timestamp - prev_ts))
        prev_ts = cloud.timestamp
        t0 = time.perf_counter()
        result = session.process_frame(cloud)
        if args.realtime:
            latency = (time.perf_counter() - t0) * 1000.0
            print(f"frame {session.frame_count - 1}: {latency:.1f} ms"
                  + ("" if result.registered else " [fallback]"), file=sys.stderr)
        if not result.registered:
            collapsed = True
    session.finalize()

    save_grid(session.grid, f"{args.out_prefix}_raw.pgm", f"{args.out_prefix}_raw.meta")
    with open(f"{args.out_prefix}_trail.txt", "w") as fh:
        for ts, pose in session.trail:
            fh.write(f"{ts:.6f} {pose.x:.6f} {pose.y:.6f} {pose.yaw:.6f}\n")
    if cleaner is not None:
        latest = session.latest_clean()
        if latest is not None:
            save_png(latest[1], f"{args.out_prefix}_clean.png")
    for warning in session.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 2 if collapsed else 0


def cmd_clean(args) -> int:
    img = _load_grid_image(args.input_image)
    if img.width > 8192 or img.height > 8192:
        raise CliError(f"image {img.width}x{img.height} exceeds 8192^2")
    cleaner = _make_cleaner(args)
    cleaned = clean_image(img, cleaner)
    save_png(cleaned, args.out_path)
    return 0


def cmd_dataset(args) -> int:
    if args.count < 1:
        raise CliError("count must be >= 1")
    manifest = errorsim.generate_dataset(
        args.count,
        args.out_dir,
        master_seed=args.seed,
        completion_range=tuple(args.completion),
        noise_range=tuple(args.noise),
        linear_drift_range=tuple(args.linear_drift),
        angular_drift_range=tuple(args.angular_drift),
        accidental_range=tuple(args.accidental),
        size=args.size,
    )
    print(manifest)
    return 0


def cmd_eval(args) -> int:
    reports = []
    if args.manifest:
        if not os.path.isfile(args.manifest):
            raise CliError(f"manifest not found: {args.manifest}")
        base = os.path.dirname(os.path.abspath(args.manifest))
        for entry in errorsim.read_manifest(args.manifest):
            sid = entry["id"]
            gt = _load_grid_image(os.path.join(base, f"{sid}_clean.png"))
            if args.pred_dir:
                pred = _load_grid_image(os.path.join(args.pred_dir, f"{sid}.png"))
            else:
                pred = _load_grid_image(os.path.join(base, f"{sid}_err.png"))
            reports.append(metrics.evaluate_pair(pred, gt, sample_id=sid))
        if reports:
            reports.append(metrics.mean_report(reports))
    else:
        if not args.pred or not args.gt:
            raise CliError("eval needs PRED and GT images, or --manifest")
        pred = _load_grid_image(args.pred)
        gt = _load_grid_image(args.gt)
        reports.append(metrics.evaluate_pair(pred, gt, sample_id=os.path.basename(args.pred)))
    sys.stdout.write(metrics.format_reports(reports, as_csv=args.csv))
    return 0


def cmd_info(args) -> int:
    path = args.path
    if not os.path.isfile(path):
        raise CliError(f"no such file: {path}")
    if path.endswith(".gsm"):
        model = load_generator(path)
        print(f"generator model: {len(model.layers)} layers, {model.total_params()} parameters")
        for layer in model.layers:
            print(f"  {layer.header_line()}")
    elif path.endswith((".png", ".pgm")):
        img = _load_grid_image(path)
        vals, counts = np.unique(img.pixels, return_counts=True)
        print(f"{img.width}x{img.height} grid image, form={img.form}")
        for v, c in zip(vals[:8], counts[:8]):
            print(f"  code {v}: {c} px")
        if len(vals) > 8:
            print(f"  ... {len(vals) - 8} more codes")
    else:
        entries = errorsim.read_manifest(path)
        if not entries:
            raise CliError(f"unrecognized file type: {path}")
        comp = [e["completion"] for e in entries]
        print(f"dataset manifest: {len(entries)} pairs, "
              f"completion range [{min(comp):.2f}, {max(comp):.2f}]")
    return 0


_HANDLERS = {
    "slam": cmd_slam,
    "clean": cmd_clean,
    "dataset": cmd_dataset,
    "eval": cmd_eval,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
