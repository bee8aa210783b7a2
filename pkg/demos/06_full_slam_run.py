#!/usr/bin/env python3
# Full pipeline through the CLI: synthesize a short LiDAR sequence to disk,
# replay it with `gridforge slam`, and inspect the written artifacts.

import os
import subprocess
import sys

import numpy as np

from gridforge.pointcloud import PointCloud3D, save_pointcloud

OUT = os.path.join(os.path.dirname(__file__), "output")
SEQ = os.path.join(OUT, "sequence")
os.makedirs(SEQ, exist_ok=True)

rng = np.random.default_rng(3)


def corridor_world(n=50000):
    k = n // 4
    return np.vstack([
        np.column_stack([rng.uniform(-4, 16, k), np.full(k, 2.5), rng.uniform(0, 2.5, k)]),
        np.column_stack([rng.uniform(-4, 16, k), np.full(k, -2.5), rng.uniform(0, 2.5, k)]),
        np.column_stack([np.full(k, 16.0), rng.uniform(-2.5, 2.5, k), rng.uniform(0, 2.5, k)]),
        np.column_stack([np.full(k, -4.0), rng.uniform(-2.5, 2.5, k), rng.uniform(0, 2.5, k)]),
    ])


world = corridor_world()
for i in range(12):
    sensor = np.array([i * 0.25, 0.0, 0.8])
    idx = rng.choice(len(world), 20000, replace=False)
    pts = world[idx] - sensor
    pts = pts[np.linalg.norm(pts, axis=1) < 12.0]
    pts += rng.normal(0, 0.004, pts.shape)
    save_pointcloud(PointCloud3D(pts, timestamp=i * 0.1),
                    os.path.join(SEQ, f"frame_{i:03d}.txt"))
print(f"wrote 12 frames to {SEQ}")

cfg = os.path.join(OUT, "session.cfg")
with open(cfg, "w") as fh:
    fh.write("z_band: -0.5 1.5\n")

prefix = os.path.join(OUT, "slamrun")
cmd = [sys.executable, "-m", "gridforge.cli", "slam", SEQ, prefix,
       "--config", cfg, "--morph"]
print("running:", " ".join(cmd[2:]))
subprocess.run(cmd, check=True)

trail = open(prefix + "_trail.txt").read().splitlines()
print(f"trail: {len(trail)} poses; final: {trail[-1]}")
for suffix in ("_raw.pgm", "_raw.meta", "_clean.png"):
    path = prefix + suffix
    print(f"  {path}: {os.path.getsize(path)} bytes")
