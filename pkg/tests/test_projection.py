import numpy as np
import pytest

from gridforge.pointcloud import PointCloud3D
from gridforge.projection import LaserScan2D, project_to_2d


def brute_force_bins(points, num_bins, z_band):
    """Independent per-bin minimum over all points."""
    ranges = np.full(num_bins, np.inf)
    width = 2 * np.pi / num_bins
    for x, y, z in points:
        if not (z_band[0] <= z <= z_band[1]):
            continue
        r = np.hypot(x, y)
        if r == 0:
            continue
        theta = np.arctan2(y, x)
        if theta <= -np.pi:
            theta += 2 * np.pi
        b = min(int((theta + np.pi) // width), num_bins - 1)
        ranges[b] = min(ranges[b], r)
    return ranges


def test_axis_aligned_point():
    scan = project_to_2d(PointCloud3D([[1.0, 0.0, 0.1]]), 360, (-0.5, 1.5))
    b = int(np.floor((0 + np.pi) / (2 * np.pi / 360)))
    assert scan.ranges[b] == pytest.approx(1.0)
    assert np.isinf(np.delete(scan.ranges, b)).all()


def test_positive_y_axis_point():
    scan = project_to_2d(PointCloud3D([[0.0, 2.0, 0.0]]), 360, (-0.5, 1.5))
    b = int(np.floor((np.pi / 2 + np.pi) / (2 * np.pi / 360)))
    assert scan.ranges[b] == pytest.approx(2.0)


def test_same_bin_keeps_minimum():
    cloud = PointCloud3D([[3.0, 0.0, 0.0], [5.0, 0.001, 0.0]])
    scan = project_to_2d(cloud, 720, (-1.0, 1.0))
    finite = scan.ranges[np.isfinite(scan.ranges)]
    assert len(finite) == 1
    assert finite[0] == pytest.approx(3.0)


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(21)
    for trial in range(10):
        pts = np.column_stack([
            rng.uniform(-10, 10, 300),
            rng.uniform(-10, 10, 300),
            rng.uniform(-1, 3, 300),
        ])
        scan = project_to_2d(PointCloud3D(pts), 180, (0.1, 2.0))
        want = brute_force_bins(pts, 180, (0.1, 2.0))
        assert np.array_equal(scan.ranges, want)


def test_z_band_discards():
    cloud = PointCloud3D([[1, 0, 5.0], [1, 0, -5.0]])
    scan = project_to_2d(cloud, 360, (0.1, 2.0))
    assert np.isinf(scan.ranges).all()


def test_rotation_shifts_bins():
    rng = np.random.default_rng(5)
    num_bins = 360
    width = 2 * np.pi / num_bins
    # angles nudged off bin edges so the shift is exact
    theta = rng.uniform(0.1, 0.9, 100) * width + width * rng.integers(0, num_bins, 100)
    r = rng.uniform(1, 9, 100)
    pts = np.column_stack([r * np.cos(theta), r * np.sin(theta), np.full(100, 0.5)])
    base = project_to_2d(PointCloud3D(pts), num_bins, (0, 1))

    k = 37
    phi = k * width
    c, s = np.cos(phi), np.sin(phi)
    rot = pts.copy()
    rot[:, 0] = c * pts[:, 0] - s * pts[:, 1]
    rot[:, 1] = s * pts[:, 0] + c * pts[:, 1]
    shifted = project_to_2d(PointCloud3D(rot), num_bins, (0, 1))
    assert np.allclose(np.roll(base.ranges, k), shifted.ranges, equal_nan=True)


def test_order_independent():
    rng = np.random.default_rng(6)
    pts = rng.uniform(-5, 5, (200, 3))
    a = project_to_2d(PointCloud3D(pts), 90, (-5, 5))
    b = project_to_2d(PointCloud3D(pts[::-1]), 90, (-5, 5))
    assert np.array_equal(a.ranges, b.ranges)


def test_range_bounded_by_max_planar_distance():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-4, 4, (300, 3))
    scan = project_to_2d(PointCloud3D(pts), 360, (-4, 4))
    max_planar = np.hypot(pts[:, 0], pts[:, 1]).max()
    finite = scan.ranges[np.isfinite(scan.ranges)]
    assert finite.max() <= max_planar + 1e-12


def test_empty_cloud_all_no_return():
    scan = project_to_2d(PointCloud3D(np.empty((0, 3))), 42, (0, 1))
    assert scan.num_bins == 42
    assert np.isinf(scan.ranges).all()


def test_scan_validation():
    with pytest.raises(ValueError):
        LaserScan2D(np.array([]))
    with pytest.raises(ValueError):
        LaserScan2D(np.array([0.0]))  # finite ranges must be positive
    with pytest.raises(ValueError):
        project_to_2d(PointCloud3D([[1, 0, 0]]), 0, (0, 1))
    with pytest.raises(ValueError):
        project_to_2d(PointCloud3D([[1, 0, 0]]), 10, (2.0, 1.0))
