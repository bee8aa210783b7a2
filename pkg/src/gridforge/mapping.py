"""Probabilistic occupancy grid built from posed planar scans.

Evidence accumulates per cell as clamped log-odds: cells crossed by a beam
lean free, the cell containing the return leans occupied. The occupied
increment (+1.5) outweighs the free decrement (-0.41) so sparse projected
returns register on the first hit while free space needs corroboration.
The grid doubles in size toward whichever side a scan runs past.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridimage import UNEXPLORED, GridImage
from .projection import LaserScan2D
from .raycast import supercover_segments
from .se3 import Pose2D

L_OCC = 1.5
L_FREE = -0.41
L_CLAMP = 4.0
MAX_DIMENSION = 8192


class GridCapacityError(RuntimeError):
    """Growth would exceed the configured maximum grid dimension."""


@dataclass
class PoseTrail:
    """Chronological (timestamp, pose) record of the session."""

    entries: list = field(default_factory=list)

    def append(self, timestamp: float, pose: Pose2D) -> None:
        if self.entries and timestamp <= self.entries[-1][0]:
            raise ValueError(
                f"trail timestamps must strictly increase "
                f"({self.entries[-1][0]} -> {timestamp})"
            )
        self.entries.append((float(timestamp), pose))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


class OccupancyGrid:
    """H x W log-odds grid with an explored mask and world anchoring.

    origin is the world pose of the corner of cell (row 0, col 0); columns
    run along the origin frame's +x, rows along +y. Explored probabilities
    live in [0, 1]; unexplored cells carry no probability.
    """

    def __init__(
        self,
        width: int = 64,
        height: int = 64,
        resolution: float = 0.05,
        origin: Pose2D = None,
        l_occ: float = L_OCC,
        l_free: float = L_FREE,
        clamp: float = L_CLAMP,
        max_dimension: int = MAX_DIMENSION,
    ):
        if width < 1 or height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.origin = origin if origin is not None else Pose2D(
            -width * resolution / 2.0, -height * resolution / 2.0, 0.0
        )
        self.log_odds = np.zeros((height, width))
        self.explored = np.zeros((height, width), dtype=bool)
        self.l_occ = l_occ
        self.l_free = l_free
        self.clamp = clamp
        self.max_dimension = max_dimension

    @property
    def height(self) -> int:
        return self.log_odds.shape[0]

    @property
    def width(self) -> int:
        return self.log_odds.shape[1]

    def world_to_grid(self, xy: np.ndarray) -> np.ndarray:
        """World meters -> continuous (col, row) grid coordinates."""
        xy = np.atleast_2d(xy)
        c, s = np.cos(self.origin.yaw), np.sin(self.origin.yaw)
        dx = xy[:, 0] - self.origin.x
        dy = xy[:, 1] - self.origin.y
        gx = (c * dx + s * dy) / self.resolution
        gy = (-s * dx + c * dy) / self.resolution
        return np.stack([gx, gy], axis=1)

    def probabilities(self) -> np.ndarray:
        """Occupancy probability per cell; unexplored cells read 0.5."""
        return 1.0 / (1.0 + np.exp(-self.log_odds))

    def grow(self, needed_cols: np.ndarray, needed_rows: np.ndarray) -> None:
        """Double dimensions toward whichever sides the given cells overflow."""
        cmin, cmax = int(needed_cols.min()), int(needed_cols.max())
        rmin, rmax = int(needed_rows.min()), int(needed_rows.max())
        while cmin < 0 or cmax >= self.width or rmin < 0 or rmax >= self.height:
            h, w = self.height, self.width
            grow_left = cmin < 0
            grow_right = cmax >= w
            grow_down = rmin < 0
            grow_up = rmax >= h
            new_w = w * 2 if (grow_left or grow_right) else w
            new_h = h * 2 if (grow_down or grow_up) else h
            if new_w > self.max_dimension or new_h > self.max_dimension:
                raise GridCapacityError(
                    f"grid growth to {new_w}x{new_h} exceeds maximum "
                    f"{self.max_dimension}"
                )
            col_shift = w if grow_left else 0
            row_shift = h if grow_down else 0
            lo = np.zeros((new_h, new_w))
            ex = np.zeros((new_h, new_w), dtype=bool)
            lo[row_shift : row_shift + h, col_shift : col_shift + w] = self.log_odds
            ex[row_shift : row_shift + h, col_shift : col_shift + w] = self.explored
            self.log_odds = lo
            self.explored = ex
            if col_shift or row_shift:
                # Keep cell (0,0) anchored: move the origin back along the
                # grid axes by the number of prepended cells.
                c, s = np.cos(self.origin.yaw), np.sin(self.origin.yaw)
                ox = self.origin.x - (c * col_shift - s * row_shift) * self.resolution
                oy = self.origin.y - (s * col_shift + c * row_shift) * self.resolution
                self.origin = Pose2D(ox, oy, self.origin.yaw)
            cmin += col_shift
            cmax += col_shift
            rmin += row_shift
            rmax += row_shift
            needed_cols = needed_cols + col_shift
            needed_rows = needed_rows + row_shift

    def integrate_scan(self, scan: LaserScan2D, pose: Pose2D) -> None:
        """Fold one posed scan into the grid.

        Finite beams mark traversed cells free-leaning and their endpoint
        cell occupied-leaning; no-return beams update nothing. The grid
        grows automatically when endpoints land outside it.
        """
        finite = np.isfinite(scan.ranges)
        if not finite.any():
            return
        r = scan.ranges[finite]
        world_angles = pose.yaw + scan.bin_angles()[finite]
        ends_xy = np.stack(
            [pose.x + r * np.cos(world_angles), pose.y + r * np.sin(world_angles)],
            axis=1,
        )
        start_cell = np.floor(self.world_to_grid([[pose.x, pose.y]])[0]).astype(np.int64)
        end_cells_probe = np.floor(self.world_to_grid(ends_xy)).astype(np.int64)
        probe = np.vstack([start_cell[None, :], end_cells_probe])
        self.grow(probe[:, 0], probe[:, 1])

        start_g = self.world_to_grid([[pose.x, pose.y]])[0]
        ends_g = self.world_to_grid(ends_xy)
        starts = np.repeat(start_g[None, :], len(ends_g), axis=0)
        _, free_cells, end_cells = supercover_segments(starts, ends_g)

        np.add.at(self.log_odds, (free_cells[:, 1], free_cells[:, 0]), self.l_free)
        np.add.at(self.log_odds, (end_cells[:, 1], end_cells[:, 0]), self.l_occ)
        np.clip(self.log_odds, -self.clamp, self.clamp, out=self.log_odds)
        self.explored[free_cells[:, 1], free_cells[:, 0]] = True
        self.explored[end_cells[:, 1], end_cells[:, 0]] = True

    def snapshot_trinary(self) -> GridImage:
        """Quantize to the 8-bit raw exchange form (unexplored = 255)."""
        p = self.probabilities()
        codes = np.rint(p * 254.0).astype(np.uint8)
        codes[~self.explored] = UNEXPLORED
        return GridImage(codes, form="raw")

    def copy(self) -> "OccupancyGrid":
        dup = OccupancyGrid(
            self.width,
            self.height,
            self.resolution,
            self.origin,
            self.l_occ,
            self.l_free,
            self.clamp,
            self.max_dimension,
        )
        dup.log_odds = self.log_odds.copy()
        dup.explored = self.explored.copy()
        return dup


def save_grid(grid: OccupancyGrid, pgm_path: str, meta_path: str) -> None:
    """Export the raw snapshot as a PGM plus key: value sidecar metadata."""
    from .gridimage import save_pgm

    save_pgm(grid.snapshot_trinary(), pgm_path)
    with open(meta_path, "w") as fh:
        fh.write(f"resolution: {grid.resolution!r}\n")
        fh.write(f"origin_x: {grid.origin.x!r}\n")
        fh.write(f"origin_y: {grid.origin.y!r}\n")
        fh.write(f"origin_yaw: {grid.origin.yaw!r}\n")
        fh.write(f"width: {grid.width}\n")
        fh.write(f"height: {grid.height}\n")


def load_grid_metadata(meta_path: str) -> dict:
    meta = {}
    with open(meta_path) as fh:
        for line in fh:
            line = line.strip()
            if not line or ":" not in line:
                continue
            key, value = line.split(":", 1)
            meta[key.strip()] = float(value)
    return meta
