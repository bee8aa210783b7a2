#!/usr/bin/env python3
# Point-cloud preprocessing: drop sensor-body returns with the box filter,
# then thin the cloud to one centroid per voxel before registration.

import numpy as np

from gridforge import PointCloud3D, box_filter, voxel_downsample

rng = np.random.default_rng(0)

# a synthetic scan: dense room walls plus a clump of robot-body returns
wall = np.column_stack([
    np.full(20000, 4.0) + rng.normal(0, 0.01, 20000),
    rng.uniform(-4, 4, 20000),
    rng.uniform(0, 2.5, 20000),
])
body = rng.uniform(-0.3, 0.3, (2000, 3))
cloud = PointCloud3D(np.vstack([wall, body]))
print(f"raw cloud: {len(cloud)} points")

boxed = box_filter(cloud, half_extent=0.5)   # removes the 1 m^3 cube at the origin
print(f"after box filter: {len(boxed)} points "
      f"({len(cloud) - len(boxed)} body returns removed)")

voxeled = voxel_downsample(boxed, resolution=0.25)
print(f"after 0.25 m voxel downsample: {len(voxeled)} points")
print(f"reduction: {len(cloud) / len(voxeled):.1f}x fewer points for registration")

# filters preserve geometry: every output point sits inside an occupied voxel
keys_in = set(map(tuple, np.floor(boxed.points / 0.25).astype(int)))
keys_out = set(map(tuple, np.floor(voxeled.points / 0.25).astype(int)))
assert keys_out <= keys_in
print("every downsampled point lies in a voxel that held input points")
