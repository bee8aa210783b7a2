"""3D point cloud to planar range-scan conversion.

Points inside a height band are binned by azimuth; each bin keeps the
minimum planar range so the nearest obstacle wins. The resulting scan shares
the frame of the 3D cloud the odometry was computed on, so poses estimated
in 3D drop straight onto the 2D map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NO_RETURN = np.inf


@dataclass(frozen=True)
class LaserScan2D:
    """Fixed-resolution azimuth scan. ranges[i] is meters or inf (no return).

    Bin i covers [angle_min + i*w, angle_min + (i+1)*w) with
    w = (angle_max - angle_min) / num_bins.
    """

    ranges: np.ndarray
    angle_min: float = -np.pi
    angle_max: float = np.pi
    timestamp: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=np.float64).reshape(-1)
        if len(r) < 1:
            raise ValueError("scan needs at least one bin")
        finite = r[np.isfinite(r)]
        if np.any(finite <= 0):
            raise ValueError("finite ranges must be positive")
        object.__setattr__(self, "ranges", r)

    @property
    def num_bins(self) -> int:
        return len(self.ranges)

    @property
    def bin_width(self) -> float:
        return (self.angle_max - self.angle_min) / self.num_bins

    def bin_angles(self) -> np.ndarray:
        """Center azimuth of every bin."""
        return self.angle_min + (np.arange(self.num_bins) + 0.5) * self.bin_width


def project_to_2d(
    cloud,
    num_bins: int = 720,
    z_band: tuple[float, float] = (0.1, 2.0),
) -> LaserScan2D:
    """Collapse a 3D cloud into an azimuth-binned planar scan.

    Points with z outside z_band are discarded. Each survivor lands in the
    bin containing its azimuth theta = atan2(y, x), normalised to (-pi, pi];
    range is the planar distance sqrt(x^2 + y^2). Where bins collide the
    minimum range is kept; empty bins hold the no-return sentinel (inf).
    """
    if num_bins < 1:
        raise ValueError("num_bins must be >= 1")
    z_lo, z_hi = z_band
    if not z_lo < z_hi:
        raise ValueError("z_band must satisfy min < max")

    ranges = np.full(num_bins, NO_RETURN)
    pts = cloud.points
    if len(pts) == 0:
        return LaserScan2D(ranges, timestamp=cloud.timestamp)

    in_band = (pts[:, 2] >= z_lo) & (pts[:, 2] <= z_hi)
    pts = pts[in_band]
    if len(pts) == 0:
        return LaserScan2D(ranges, timestamp=cloud.timestamp)

    theta = np.arctan2(pts[:, 1], pts[:, 0])
    theta[theta <= -np.pi] += 2 * np.pi  # atan2 can return -pi exactly
    planar = np.hypot(pts[:, 0], pts[:, 1])
    keep = planar > 0  # a point at the sensor axis has no azimuth
    theta, planar = theta[keep], planar[keep]

    width = 2 * np.pi / num_bins
    bins = np.floor((theta - (-np.pi)) / width).astype(np.int64)
    np.clip(bins, 0, num_bins - 1, out=bins)  # theta == pi folds into the last bin
    np.minimum.at(ranges, bins, planar)
    return LaserScan2D(ranges, timestamp=cloud.timestamp)
