"""Paired (erroneous, clean) map synthesis from procedural floor plans.

A frontier-driven agent explores a generated plan with a 180-degree, 8 m
fan of rays. Hits integrate into two log-odds maps at once: the clean map
at the agent's true pose, and the erroneous map at a pose corrupted by
accumulated linear/angular odometry drift, with per-write sensor-noise
flips and occasional rays that punch through walls beyond doorways. Both
maps quantize to the shared trinary alphabet, giving aligned image pairs
for training and evaluation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import mapfilter
from .gridimage import UNEXPLORED, GridImage, load_image, save_png
from .mapping import L_CLAMP, L_FREE, L_OCC
from .raycast import cast_rays, supercover_segments

SENSOR_RANGE = 8.0
SENSOR_FOV = np.pi
SENSOR_BEAMS = 181  # one ray per degree across the fan


@dataclass(frozen=True)
class FloorPlan:
    wall: np.ndarray          # (H, W) bool, True = blocking
    door: np.ndarray          # (H, W) bool, True = doorway gap
    resolution: float         # meters per cell
    rooms: list = field(default_factory=list)  # interior rects (r0, c0, r1, c1)

    def __post_init__(self):
        if not (self.wall[0].all() and self.wall[-1].all()
                and self.wall[:, 0].all() and self.wall[:, -1].all()):
            raise ValueError("floor plan boundary must be fully walled")


@dataclass(frozen=True)
class ErrorConfig:
    noise_flip_prob: float = 0.02       # per written cell
    linear_drift: float = 0.01          # meters per meter traveled
    angular_drift: float = np.deg2rad(0.5)  # radians per meter traveled
    completion_fraction: float = 0.8
    accidental_ray_prob: float = 0.02   # per door-crossing beam
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("noise_flip_prob", "accidental_ray_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if not 0.0 < self.completion_fraction <= 1.0:
            raise ValueError("completion_fraction must be in (0, 1]")


@dataclass(frozen=True)
class SamplePair:
    erroneous: GridImage
    clean: GridImage
    seed: int
    config: ErrorConfig
    achieved_completion: float = 1.0

    def __post_init__(self):
        if self.erroneous.pixels.shape != self.clean.pixels.shape:
            raise ValueError("pair images must share dimensions")


def generate_floorplan(
    seed: int,
    size: int = 256,
    resolution: float = 0.025,
    min_room_cells: int = 60,
    wall_thickness: int = 2,
) -> FloorPlan:
    """Recursive rectangular subdivision into 3..12 rooms with door gaps.

    Defaults give a 6.4 m flat rasterized at 2.5 cm: small enough that the
    drift a desk-scale exploration accumulates stays locally correctable,
    which keeps the cleaning stage meaningful. Walls are wall_thickness
    cells thick, the outer boundary is closed, and every door gap is
    0.8..1.2 m wide. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    t = max(1, int(wall_thickness))
    wall = np.zeros((size, size), dtype=bool)
    door = np.zeros((size, size), dtype=bool)
    wall[:t, :] = wall[-t:, :] = wall[:, :t] = wall[:, -t:] = True

    door_lo = max(3, int(round(0.8 / resolution)))
    door_hi = max(door_lo + 1, int(round(1.2 / resolution)))
    target_rooms = int(rng.integers(3, 13))
    rooms = [(t, t, size - t, size - t)]

    need = 2 * min_room_cells + t  # cut position needs room for the wall itself
    while len(rooms) < target_rooms:
        splittable = [
            (i, r) for i, r in enumerate(rooms)
            if (r[2] - r[0] > need) or (r[3] - r[1] > need)
        ]
        if not splittable:
            break
        # largest splittable room first keeps proportions sane
        idx, (r0, c0, r1, c1) = max(
            splittable, key=lambda t_: (t_[1][2] - t_[1][0]) * (t_[1][3] - t_[1][1])
        )
        if (r1 - r0) >= (c1 - c0) and (r1 - r0) > need:
            cut = int(rng.integers(r0 + min_room_cells, r1 - min_room_cells - t))
            span = c1 - c0
            gap = int(rng.integers(door_lo, min(door_hi, span - 2) + 1))
            g0 = int(rng.integers(c0 + 1, c1 - gap))
            wall[cut : cut + t, c0:c1] = True
            wall[cut : cut + t, g0 : g0 + gap] = False
            door[cut : cut + t, g0 : g0 + gap] = True
            rooms[idx] = (r0, c0, cut, c1)
            rooms.append((cut + t, c0, r1, c1))
        elif (c1 - c0) > need:
            cut = int(rng.integers(c0 + min_room_cells, c1 - min_room_cells - t))
            span = r1 - r0
            gap = int(rng.integers(door_lo, min(door_hi, span - 2) + 1))
            g0 = int(rng.integers(r0 + 1, r1 - gap))
            wall[r0:r1, cut : cut + t] = True
            wall[g0 : g0 + gap, cut : cut + t] = False
            door[g0 : g0 + gap, cut : cut + t] = True
            rooms[idx] = (r0, c0, r1, cut)
            rooms.append((r0, cut + t, r1, c1))
        else:
            break
    return FloorPlan(wall, door, resolution, rooms)


def load_floorplan_png(path: str, resolution: float) -> FloorPlan:
    """External plan import: 8-bit PNG, 0 = wall, 255 = free."""
    img = load_image(path, form="raw")
    wall = img.pixels < 128
    wall[0, :] = wall[-1, :] = wall[:, 0] = wall[:, -1] = True
    return FloorPlan(wall, np.zeros_like(wall), resolution)


def _integrate_fan(
    log_odds: np.ndarray,
    explored: np.ndarray,
    origin_m: np.ndarray,
    angles: np.ndarray,
    ranges: np.ndarray,
    resolution: float,
) -> None:
    """Log-odds integration of one ray fan into a fixed-size raster."""
    finite = np.isfinite(ranges)
    if not finite.any():
        return
    r = ranges[finite] + resolution / 2.0  # bias endpoint into the hit cell
    a = angles[finite]
    h, w = log_odds.shape
    start = origin_m / resolution
    ends = np.stack(
        [start[0] + r * np.cos(a) / resolution, start[1] + r * np.sin(a) / resolution],
        axis=1,
    )
    starts = np.repeat(start[None, :], len(ends), axis=0)
    _, free_cells, end_cells = supercover_segments(starts, ends)

    fx, fy = free_cells[:, 0], free_cells[:, 1]
    keep = (fx >= 0) & (fx < w) & (fy >= 0) & (fy < h)
    fx, fy = fx[keep], fy[keep]
    ex, ey = end_cells[:, 0], end_cells[:, 1]
    keepe = (ex >= 0) & (ex < w) & (ey >= 0) & (ey < h)
    ex, ey = ex[keepe], ey[keepe]

    np.add.at(log_odds, (fy, fx), L_FREE)
    np.add.at(log_odds, (ey, ex), L_OCC)
    np.clip(log_odds, -L_CLAMP, L_CLAMP, out=log_odds)
    explored[fy, fx] = True
    explored[ey, ex] = True


def _flip_cells(img: GridImage, prob: float, rng: np.random.Generator) -> GridImage:
    """Sensor-noise model: each explored cell swaps class with prob `prob`,
    giving the isolated salt flips real scan noise leaves in maps."""
    from .gridimage import FREE, OCCUPIED

    if prob <= 0.0:
        return img
    px = img.pixels.copy()
    explored = px != UNEXPLORED
    flip = explored & (rng.random(px.shape) < prob)
    occ = flip & (px == OCCUPIED)
    fre = flip & (px == FREE)
    px[occ] = FREE
    px[fre] = OCCUPIED
    return GridImage(px, form="trinary")


def _trinarize(log_odds: np.ndarray, explored: np.ndarray) -> GridImage:
    p = 1.0 / (1.0 + np.exp(-log_odds))
    codes = np.rint(p * 254.0).astype(np.uint8)
    codes[~explored] = UNEXPLORED
    return mapfilter.confidence_filter(GridImage(codes, form="raw"))


def _free_graph(free: np.ndarray) -> csr_matrix:
    """4-connected unit-cost graph over free cells."""
    h, w = free.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols = [], []
    right = free[:, :-1] & free[:, 1:]
    rows.append(idx[:, :-1][right])
    cols.append(idx[:, 1:][right])
    down = free[:-1, :] & free[1:, :]
    rows.append(idx[:-1, :][down])
    cols.append(idx[1:, :][down])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    data = np.ones(len(r))
    return csr_matrix(
        (np.concatenate([data, data]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(h * w, h * w),
    )


def explore_and_map(
    plan: FloorPlan,
    config: ErrorConfig,
    sensor_range: float = SENSOR_RANGE,
    fov: float = SENSOR_FOV,
    n_beams: int = SENSOR_BEAMS,
    scan_stride: int = 6,
    max_scans: int = 4000,
) -> SamplePair:
    """Frontier exploration producing an aligned (erroneous, clean) pair.

    Rays are cast from the true pose against plan geometry; the clean map
    integrates them at the true pose while the erroneous map integrates the
    observed returns at the drift-corrupted pose with noise flips. If the
    agent runs out of reachable frontiers before its completion quota the
    pair is returned with the achieved completion recorded.
    """
    rng = np.random.default_rng(config.rng_seed)
    res = plan.resolution
    h, w = plan.wall.shape
    free = ~plan.wall

    clean_lo = np.zeros((h, w))
    clean_ex = np.zeros((h, w), dtype=bool)
    err_lo = np.zeros((h, w))
    err_ex = np.zeros((h, w), dtype=bool)

    if plan.rooms:
        r0, c0, r1, c1 = plan.rooms[0]
        start_cell = ((r0 + r1) // 2, (c0 + c1) // 2)
    else:
        free_cells = np.argwhere(free)
        start_cell = tuple(free_cells[len(free_cells) // 2])
    if not free[start_cell]:
        free_cells = np.argwhere(free)
        start_cell = tuple(free_cells[0])

    plus = ndimage.generate_binary_structure(2, 1)
    labels, _ = ndimage.label(free, structure=plus)
    reach = labels == labels[start_cell]
    n_reach = int(reach.sum())

    graph = _free_graph(free)
    pos = np.array([(start_cell[1] + 0.5) * res, (start_cell[0] + 0.5) * res])
    heading = 0.0
    traveled = 0.0
    err_yaw = 0.0
    ang_sign = float(rng.choice([-1.0, 1.0]))
    lin_dir = rng.uniform(-np.pi, np.pi)
    lin_offset = np.array([np.cos(lin_dir), np.sin(lin_dir)])

    rel_angles = np.linspace(-fov / 2.0, fov / 2.0, n_beams)
    path: list[tuple[int, int]] = []
    coverage = 0.0

    for _ in range(max_scans):
        angles = heading + rel_angles
        true_r, obs_r = cast_rays(
            plan.wall, pos, angles, sensor_range, res,
            door=plan.door, accidental_prob=config.accidental_ray_prob, rng=rng,
        )
        _integrate_fan(clean_lo, clean_ex, pos, angles, true_r, res)
        # The map-writing pose carries the accumulated odometry error: a
        # linear offset and a heading bias, each growing with distance.
        err_pos = pos + traveled * config.linear_drift * lin_offset
        _integrate_fan(err_lo, err_ex, err_pos, angles + err_yaw, obs_r, res)
        coverage = float((clean_ex & reach).sum()) / max(n_reach, 1)
        if coverage >= config.completion_fraction:
            break

        if not path:
            cell = (min(h - 1, max(0, int(pos[1] / res))), min(w - 1, max(0, int(pos[0] / res))))
            node = cell[0] * w + cell[1]
            dist, pred = dijkstra(
                graph, indices=node, return_predecessors=True, unweighted=True
            )
            frontier = reach & ~clean_ex
            dist_f = np.where(frontier.ravel(), dist, np.inf)
            target = int(np.argmin(dist_f))
            if not np.isfinite(dist_f[target]):
                break  # trapped: no reachable unexplored cell left
            chain = []
            cur = target
            while cur != node and cur >= 0:
                chain.append((cur // w, cur % w))
                cur = int(pred[cur])
            path = chain[::-1]

        hop = path[: scan_stride]
        path = path[scan_stride:]
        if hop:
            new_pos = np.array([(hop[-1][1] + 0.5) * res, (hop[-1][0] + 0.5) * res])
            delta = new_pos - pos
            dl = float(np.hypot(*delta))
            if dl > 0:
                heading = float(np.arctan2(delta[1], delta[0]))
                traveled += dl
                err_yaw += dl * config.angular_drift * ang_sign
            pos = new_pos

    erroneous = _flip_cells(_trinarize(err_lo, err_ex), config.noise_flip_prob, rng)
    return SamplePair(
        erroneous=erroneous,
        clean=_trinarize(clean_lo, clean_ex),
        seed=int(config.rng_seed),
        config=config,
        achieved_completion=coverage,
    )


def augment(pair: SamplePair, seed: int) -> list[SamplePair]:
    """Original + three exact rotations + one free rotation + one crop.

    The same transform is applied to both images of the pair so they stay
    pixel-aligned; rotation fill and crop remainders are unexplored.
    """
    rng = np.random.default_rng(seed)
    out = [pair]
    for k in (1, 2, 3):
        out.append(replace(
            pair,
            erroneous=GridImage(np.rot90(pair.erroneous.pixels, k).copy()),
            clean=GridImage(np.rot90(pair.clean.pixels, k).copy()),
        ))
    angle = float(rng.uniform(10.0, 350.0))
    rot = lambda px: ndimage.rotate(
        px, angle, reshape=False, order=0, mode="constant", cval=UNEXPLORED
    )
    out.append(replace(
        pair,
        erroneous=GridImage(rot(pair.erroneous.pixels)),
        clean=GridImage(rot(pair.clean.pixels)),
    ))
    h, w = pair.clean.pixels.shape
    scale = float(rng.uniform(np.sqrt(0.6), 1.0))
    ch, cw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
    r0 = int(rng.integers(0, h - ch + 1))
    c0 = int(rng.integers(0, w - cw + 1))
    out.append(replace(
        pair,
        erroneous=GridImage(pair.erroneous.pixels[r0 : r0 + ch, c0 : c0 + cw].copy()),
        clean=GridImage(pair.clean.pixels[r0 : r0 + ch, c0 : c0 + cw].copy()),
    ))
    return out


def generate_dataset(
    count: int,
    out_dir: str,
    master_seed: int = 0,
    completion_range: tuple[float, float] = (0.3, 1.0),
    noise_range: tuple[float, float] = (0.0, 0.05),
    linear_drift_range: tuple[float, float] = (0.0, 0.02),
    angular_drift_range: tuple[float, float] = (0.0, np.deg2rad(1.0)),
    accidental_range: tuple[float, float] = (0.0, 0.1),
    size: int = 256,
    resolution: float = 0.025,
    fixed_config: ErrorConfig = None,
) -> str:
    """Write `count` paired PNGs plus a manifest; byte-identical per seed.

    Error severities and completion are drawn per sample from the given
    ranges (or pinned via fixed_config). Manifest lines record
    id, seed, completion, noise, linear drift, angular drift, accidental.
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(master_seed)
    lines = []
    for i in range(count):
        seed = int(rng.integers(0, 2**31 - 1))
        if fixed_config is not None:
            cfg = replace(fixed_config, rng_seed=seed)
        else:
            cfg = ErrorConfig(
                noise_flip_prob=float(rng.uniform(*noise_range)),
                linear_drift=float(rng.uniform(*linear_drift_range)),
                angular_drift=float(rng.uniform(*angular_drift_range)),
                completion_fraction=float(rng.uniform(*completion_range)),
                accidental_ray_prob=float(rng.uniform(*accidental_range)),
                rng_seed=seed,
            )
        plan = generate_floorplan(seed, size=size, resolution=resolution)
        pair = explore_and_map(plan, cfg)
        sid = f"{i:06d}"
        save_png(pair.erroneous, os.path.join(out_dir, f"{sid}_err.png"))
        save_png(pair.clean, os.path.join(out_dir, f"{sid}_clean.png"))
        lines.append(
            f"{sid} {seed} {cfg.completion_fraction:.6f} {cfg.noise_flip_prob:.6f} "
            f"{cfg.linear_drift:.6f} {cfg.angular_drift:.6f} {cfg.accidental_ray_prob:.6f}"
        )
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def read_manifest(path: str) -> list[dict]:
    entries = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 7:
                continue
            entries.append({
                "id": parts[0],
                "seed": int(parts[1]),
                "completion": float(parts[2]),
                "noise": float(parts[3]),
                "linear_drift": float(parts[4]),
                "angular_drift": float(parts[5]),
                "accidental": float(parts[6]),
            })
    return entries
