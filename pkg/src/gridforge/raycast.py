"""Grid ray traversal shared by the mapper and the error simulator.

Segments are expressed in continuous grid coordinates (units of cells);
traversal enumerates every cell a segment passes through, stepping one cell
boundary at a time along whichever axis is crossed first. The inner loops
are JIT-compiled; wrappers keep numpy-facing signatures.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _supercover_fill(starts, ends, out_ids, out_cells):
    total = 0
    for b in range(starts.shape[0]):
        x0, y0 = starts[b, 0], starts[b, 1]
        x1, y1 = ends[b, 0], ends[b, 1]
        ix = int(np.floor(x0))
        iy = int(np.floor(y0))
        ex = int(np.floor(x1))
        ey = int(np.floor(y1))
        dx = x1 - x0
        dy = y1 - y0
        sx = 1 if dx > 0 else -1
        sy = 1 if dy > 0 else -1
        if dx != 0.0:
            tdx = abs(1.0 / dx)
            bx = ix + (1 if sx > 0 else 0)
            tmx = (bx - x0) / dx
        else:
            tdx = np.inf
            tmx = np.inf
        if dy != 0.0:
            tdy = abs(1.0 / dy)
            by = iy + (1 if sy > 0 else 0)
            tmy = (by - y0) / dy
        else:
            tdy = np.inf
            tmy = np.inf
        guard = abs(ex - ix) + abs(ey - iy) + 1
        for _ in range(guard):
            if ix == ex and iy == ey:
                break
            out_ids[total] = b
            out_cells[total, 0] = ix
            out_cells[total, 1] = iy
            total += 1
            if tmx <= tmy:
                ix += sx
                tmx += tdx
            else:
                iy += sy
                tmy += tdy
            # past t=1 means a degenerate corner crossing pushed the walk
            # off course; stop rather than spiral
            if (ix != ex or iy != ey) and min(tmx, tmy) > 1.0 + 1e-12:
                break
    return total


def supercover_segments(starts: np.ndarray, ends: np.ndarray):
    """Cells crossed by each segment, excluding the cell containing its end.

    starts, ends: (B, 2) float arrays of (col, row) grid coordinates.
    Returns (beam_ids, cells, end_cells): beam_ids (M,) maps every traversed
    cell to its segment; cells is (M, 2) int (col, row); end_cells is (B, 2).
    Cells are emitted in traversal order per beam.
    """
    starts = np.ascontiguousarray(np.asarray(starts, dtype=np.float64).reshape(-1, 2))
    ends = np.ascontiguousarray(np.asarray(ends, dtype=np.float64).reshape(-1, 2))
    end_cells = np.floor(ends).astype(np.int64)
    if len(starts) == 0:
        return np.empty(0, np.int64), np.empty((0, 2), np.int64), end_cells
    start_cells = np.floor(starts).astype(np.int64)
    cap = int(np.abs(end_cells - start_cells).sum()) + len(starts)
    out_ids = np.empty(cap, dtype=np.int64)
    out_cells = np.empty((cap, 2), dtype=np.int64)
    total = _supercover_fill(starts, ends, out_ids, out_cells)
    return out_ids[:total], out_cells[:total], end_cells


@njit(cache=True)
def _cast_kernel(wall, door, has_door, gx, gy, cos_a, sin_a, max_range, res,
                 acc_prob, draws, true_ranges, obs_ranges):
    H, W = wall.shape
    nb = cos_a.shape[0]
    for b in range(nb):
        dx, dy = cos_a[b], sin_a[b]
        ix = int(np.floor(gx))
        iy = int(np.floor(gy))
        sx = 1 if dx > 0 else -1
        sy = 1 if dy > 0 else -1
        if dx != 0.0:
            tdx = abs(res / dx)
            bx = ix + (1 if sx > 0 else 0)
            tmx = (bx - gx) * res / dx
        else:
            tdx = np.inf
            tmx = np.inf
        if dy != 0.0:
            tdy = abs(res / dy)
            by = iy + (1 if sy > 0 else 0)
            tmy = (by - gy) * res / dy
        else:
            tdy = np.inf
            tmy = np.inf

        t_enter = 0.0
        crossed_door = False
        pierced = False
        in_wall = False
        need_true = True
        t_true = np.inf
        t_obs = np.inf

        max_steps = int(2.0 * max_range / res) + 4
        for _ in range(max_steps):
            if ix < 0 or ix >= W or iy < 0 or iy >= H or t_enter > max_range:
                break
            if wall[iy, ix]:
                if not in_wall:
                    if need_true:
                        t_true = t_enter
                        need_true = False
                    if pierced:
                        t_obs = t_enter
                        break
                    if crossed_door and acc_prob > 0.0 and draws[b] < acc_prob:
                        pierced = True
                        in_wall = True
                    else:
                        t_obs = t_enter
                        break
            else:
                in_wall = False
                if has_door and door[iy, ix]:
                    crossed_door = True
            if tmx <= tmy:
                t_enter = tmx
                ix += sx
                tmx += tdx
            else:
                t_enter = tmy
                iy += sy
                tmy += tdy
        true_ranges[b] = t_true if t_true <= max_range else np.inf
        obs_ranges[b] = t_obs if t_obs <= max_range else np.inf


def cast_rays(
    wall: np.ndarray,
    start: np.ndarray,
    angles: np.ndarray,
    max_range: float,
    resolution: float,
    door: np.ndarray = None,
    accidental_prob: float = 0.0,
    rng: np.random.Generator = None,
):
    """March ray fans through a wall raster until the first wall hit.

    wall: (H, W) bool, True where a cell blocks the beam.
    start: (2,) world meters; angles: (B,) world-frame beam directions.
    Returns (true_ranges, observed_ranges), both (B,) meters with inf for no
    return within max_range. observed_ranges differ where a beam that
    crossed a door cell is allowed (with accidental_prob) to punch through
    the far wall and continue to the next obstruction, mimicking returns
    captured through openings. The pass decision draws once per beam.
    """
    angles = np.asarray(angles, dtype=np.float64)
    B = len(angles)
    if accidental_prob > 0.0 and rng is not None:
        draws = rng.random(B)
    else:
        draws = np.ones(B)
        accidental_prob = 0.0
    has_door = door is not None
    door_arr = door if has_door else np.zeros((1, 1), dtype=bool)
    g = np.asarray(start, dtype=np.float64) / resolution
    true_ranges = np.empty(B)
    obs_ranges = np.empty(B)
    _cast_kernel(
        np.ascontiguousarray(wall),
        np.ascontiguousarray(door_arr),
        has_door,
        float(g[0]),
        float(g[1]),
        np.ascontiguousarray(np.cos(angles)),
        np.ascontiguousarray(np.sin(angles)),
        float(max_range),
        float(resolution),
        float(accidental_prob),
        draws,
        true_ranges,
        obs_ranges,
    )
    return true_ranges, obs_ranges
