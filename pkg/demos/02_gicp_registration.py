#!/usr/bin/env python3
# Generalized-ICP scan matching: recover a known rigid transform between a
# synthetic room scan and a moved copy, then refine against a keyframe submap.

import numpy as np

from gridforge import (
    PointCloud3D,
    Submap,
    maybe_add_keyframe,
    register_scan_to_scan,
    register_scan_to_submap,
    voxel_downsample,
)
from gridforge.se3 import SE3Transform, rotation_angle, so3_exp

rng = np.random.default_rng(1)


def room(n=1500, seed=2):
    r = np.random.default_rng(seed)
    k = n // 5
    return PointCloud3D(np.vstack([
        np.column_stack([np.full(k, 5.0), r.uniform(-4, 4, k), r.uniform(0, 3, k)]),
        np.column_stack([np.full(k, -5.0), r.uniform(-4, 4, k), r.uniform(0, 3, k)]),
        np.column_stack([r.uniform(-5, 5, k), np.full(k, 4.0), r.uniform(0, 3, k)]),
        np.column_stack([r.uniform(-5, 5, k), np.full(k, -4.0), r.uniform(0, 3, k)]),
        np.column_stack([r.uniform(-5, 5, k), r.uniform(-4, 4, k), np.zeros(k)]),
    ]))


source = room()
axis = rng.normal(size=3)
axis /= np.linalg.norm(axis)
X_true = SE3Transform(so3_exp(axis * np.deg2rad(6.0)), [0.3, -0.15, 0.05])
target = PointCloud3D(X_true.apply(source.points))

X = register_scan_to_scan(source, target)
t_err = np.linalg.norm(X.translation - X_true.translation)
r_err = np.rad2deg(rotation_angle(X.rotation.T @ X_true.rotation))
print(f"scan-to-scan: translation error {t_err:.2e} m, rotation error {r_err:.2e} deg")

# scan-to-submap: aggregate a few keyframes, then localize a displaced scan
submap = Submap()
base = voxel_downsample(room(seed=3), 0.25)
for dx in (0.0, 1.2, 2.4):
    pose = SE3Transform(np.eye(3), [dx, 0, 0])
    maybe_add_keyframe(submap, pose, PointCloud3D(pose.inverse().apply(base.points)))
print(f"submap: {len(submap)} keyframes, {len(submap.cloud)} aggregated points")

true_pose = SE3Transform(np.eye(3), [0.85, 0.1, 0.0])
scan = PointCloud3D(true_pose.inverse().apply(base.points))
X_w = register_scan_to_submap(scan, submap, SE3Transform.identity())
print(f"scan-to-submap: recovered world pose {X_w.translation.round(4)} "
      f"(truth {true_pose.translation})")
