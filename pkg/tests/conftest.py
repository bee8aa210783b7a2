"""Shared synthetic geometry builders for the test suite."""

import numpy as np
import pytest

from gridforge.pointcloud import PointCloud3D


def room_cloud(n_points: int, seed: int, half_x: float = 5.0, half_y: float = 4.0,
               height: float = 3.0) -> PointCloud3D:
    """Points on the four walls and floor of a rectangular room.

    Planar structure everywhere, so plane-regularized covariances constrain
    all six degrees of freedom.
    """
    rng = np.random.default_rng(seed)
    n5 = n_points // 5
    walls = [
        np.column_stack([np.full(n5, half_x), rng.uniform(-half_y, half_y, n5),
                         rng.uniform(0, height, n5)]),
        np.column_stack([np.full(n5, -half_x), rng.uniform(-half_y, half_y, n5),
                         rng.uniform(0, height, n5)]),
        np.column_stack([rng.uniform(-half_x, half_x, n5), np.full(n5, half_y),
                         rng.uniform(0, height, n5)]),
        np.column_stack([rng.uniform(-half_x, half_x, n5), np.full(n5, -half_y),
                         rng.uniform(0, height, n5)]),
        np.column_stack([rng.uniform(-half_x, half_x, n5),
                         rng.uniform(-half_y, half_y, n5), np.zeros(n5)]),
    ]
    return PointCloud3D(np.vstack(walls))


def corridor_world(seed: int = 0, n: int = 60000) -> np.ndarray:
    """Dense point set of a corridor with pillars; sampled per frame."""
    rng = np.random.default_rng(seed)
    n5 = n // 5
    parts = [
        np.column_stack([rng.uniform(-5, 25, n5), np.full(n5, 3.0) + rng.normal(0, 0.005, n5),
                         rng.uniform(0, 2.5, n5)]),
        np.column_stack([rng.uniform(-5, 25, n5), np.full(n5, -3.0) + rng.normal(0, 0.005, n5),
                         rng.uniform(0, 2.5, n5)]),
        np.column_stack([np.full(n5, 25.0) + rng.normal(0, 0.005, n5),
                         rng.uniform(-3, 3, n5), rng.uniform(0, 2.5, n5)]),
        np.column_stack([np.full(n5, -5.0) + rng.normal(0, 0.005, n5),
                         rng.uniform(-3, 3, n5), rng.uniform(0, 2.5, n5)]),
    ]
    for px in range(-3, 25, 4):
        m = n5 // 7
        parts.append(np.column_stack([
            np.full(m, float(px)) + rng.normal(0, 0.02, m),
            rng.uniform(1.5, 2.0, m),
            rng.uniform(0, 2.2, m),
        ]))
    return np.vstack(parts)


def sample_frame(world: np.ndarray, sensor_xyz, seed: int, n_points: int = 30000,
                 max_dist: float = 15.0, noise: float = 0.003) -> PointCloud3D:
    """Sensor-frame resample of the world around a given position."""
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(world), min(n_points, len(world)), replace=False)
    pts = world[idx] - np.asarray(sensor_xyz, dtype=float)
    keep = np.linalg.norm(pts, axis=1) < max_dist
    pts = pts[keep]
    if noise > 0:
        pts = pts + rng.normal(0, noise, pts.shape)
    return PointCloud3D(pts)


@pytest.fixture(scope="session")
def corridor():
    return corridor_world()
