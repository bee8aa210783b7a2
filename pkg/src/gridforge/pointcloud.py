"""Point cloud ingestion and pre-registration filtering.

Clouds are stored as flat numpy arrays: an (N, 3) float64 block of xyz
coordinates plus an (N,) intensity vector, wrapped in a small immutable
container. The two filters here (sensor-body box removal and voxel grid
downsampling) are applied to every frame before scan matching.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np


class PointCloudError(ValueError):
    """Raised for malformed point-cloud files or invalid point data."""


@dataclass(frozen=True)
class PointCloud3D:
    """Timestamped 3D point set with per-point intensity.

    points:    (N, 3) float64, finite
    intensity: (N,) float64, finite and >= 0
    timestamp: seconds; strictly increasing across a sequence
    """

    points: np.ndarray
    intensity: np.ndarray = None
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.intensity is None:
            inten = np.zeros(len(pts))
        else:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
        if len(inten) != len(pts):
            raise PointCloudError(
                f"intensity length {len(inten)} != point count {len(pts)}"
            )
        if not np.all(np.isfinite(pts)):
            raise PointCloudError("non-finite coordinate in point cloud")
        if not np.all(np.isfinite(inten)) or np.any(inten < 0):
            raise PointCloudError("intensity must be finite and non-negative")
        object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return len(self.points)


def load_pointcloud(path: str, timestamp: float = 0.0) -> PointCloud3D:
    """Parse an ASCII point-cloud file.

    Expected layout: a `FIELDS x y z intensity` line, an optional
    `TIMESTAMP <seconds>` line, a `POINTS <n>` line, then n records of four
    space-separated decimals. Raises PointCloudError naming the offending
    line on any malformed content.
    """
    if not os.path.isfile(path):
        raise PointCloudError(f"point-cloud file not found: {path}")
    with open(path, "r") as fh:
        lines = fh.read().splitlines()

    idx = 0
    count = None
    file_ts = None
    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if tokens[0] == "FIELDS":
            if tokens[1:] != ["x", "y", "z", "intensity"]:
                raise PointCloudError(
                    f"{path}:{idx}: unsupported FIELDS {' '.join(tokens[1:])}"
                )
        elif tokens[0] == "TIMESTAMP":
            try:
                file_ts = float(tokens[1])
            except (IndexError, ValueError):
                raise PointCloudError(f"{path}:{idx}: bad TIMESTAMP line")
        elif tokens[0] == "POINTS":
            try:
                count = int(tokens[1])
            except (IndexError, ValueError):
                raise PointCloudError(f"{path}:{idx}: bad POINTS line")
            break
        else:
            raise PointCloudError(f"{path}:{idx}: unexpected header line {tokens[0]!r}")
    if count is None:
        raise PointCloudError(f"{path}: missing POINTS header line")

    data = np.empty((count, 4))
    for i in range(count):
        lineno = idx + i + 1
        if idx + i >= len(lines):
            raise PointCloudError(f"{path}:{lineno}: expected {count} records, file ended")
        tokens = lines[idx + i].split()
        if len(tokens) != 4:
            raise PointCloudError(f"{path}:{lineno}: expected 4 fields, got {len(tokens)}")
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise PointCloudError(f"{path}:{lineno}: non-numeric field")
        if not all(np.isfinite(v) for v in row):
            raise PointCloudError(f"{path}:{lineno}: non-finite value")
        if row[3] < 0:
            raise PointCloudError(f"{path}:{lineno}: negative intensity")
        data[i] = row

    ts = file_ts if file_ts is not None else timestamp
    return PointCloud3D(points=data[:, :3], intensity=data[:, 3], timestamp=ts)


def load_sequence(directory: str, nominal_period: float = 0.1) -> list[PointCloud3D]:
    """Load a directory of frames sorted lexicographically.

    Frames without an embedded TIMESTAMP get index * nominal_period so that
    timestamps are strictly increasing.
    """
    if not os.path.isdir(directory):
        raise PointCloudError(f"sequence directory not found: {directory}")
    names = sorted(
        n for n in os.listdir(directory)
        if os.path.isfile(os.path.join(directory, n)) and not n.startswith(".")
    )
    if not names:
        raise PointCloudError(f"no point-cloud files in {directory}")
    frames = []
    for i, name in enumerate(names):
        frames.append(load_pointcloud(os.path.join(directory, name), timestamp=i * nominal_period))
    for prev, cur in zip(frames, frames[1:]):
        if cur.timestamp <= prev.timestamp:
            raise PointCloudError(
                f"timestamps not strictly increasing in {directory} "
                f"({prev.timestamp} -> {cur.timestamp})"
            )
    return frames


def save_pointcloud(cloud: PointCloud3D, path: str) -> None:
    """Write a cloud in the ASCII format understood by load_pointcloud."""
    with open(path, "w") as fh:
        fh.write("FIELDS x y z intensity\n")
        fh.write(f"TIMESTAMP {float(cloud.timestamp)!r}\n")
        fh.write(f"POINTS {len(cloud)}\n")
        for (x, y, z), inten in zip(cloud.points, cloud.intensity):
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r} {float(inten)!r}\n")


def box_filter(cloud: PointCloud3D, half_extent: float = 0.5) -> PointCloud3D:
    """Drop points inside the axis-aligned cube of side 2*half_extent at the origin.

    Removes returns from the robot/sensor body. Keeps points with
    max(|x|,|y|,|z|) > half_extent; order preserved.
    """
    if half_extent <= 0:
        raise ValueError("half_extent must be positive")
    if len(cloud) == 0:
        return cloud
    keep = np.max(np.abs(cloud.points), axis=1) > half_extent
    return PointCloud3D(cloud.points[keep], cloud.intensity[keep], cloud.timestamp)


def voxel_downsample(cloud: PointCloud3D, resolution: float = 0.25) -> PointCloud3D:
    """Reduce to one point per occupied voxel, at the centroid of that voxel's points.

    Intensity is averaged per voxel. Output order follows voxel key order and
    is deterministic for a given input.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / resolution).astype(np.int64)
    # Unique voxel ids; inverse maps each point to its voxel slot. Packing
    # the three indices into one word makes the unique pass a plain 1D sort.
    kmin = keys.min(axis=0)
    span = keys.max(axis=0) - kmin
    if np.all(span < (1 << 21)):
        k = keys - kmin
        flat = (k[:, 0] << 42) | (k[:, 1] << 21) | k[:, 2]
        _, inverse, counts = np.unique(flat, return_inverse=True, return_counts=True)
    else:
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    n_voxels = len(counts)
    sums = np.zeros((n_voxels, 3))
    np.add.at(sums, inverse, cloud.points)
    isum = np.zeros(n_voxels)
    np.add.at(isum, inverse, cloud.intensity)
    centroids = sums / counts[:, None]
    return PointCloud3D(centroids, isum / counts, cloud.timestamp)
