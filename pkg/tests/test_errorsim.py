import os

import numpy as np
import pytest
from scipy import ndimage

from gridforge.errorsim import (
    ErrorConfig,
    augment,
    explore_and_map,
    generate_dataset,
    generate_floorplan,
    read_manifest,
)
from gridforge.gridimage import FREE, OCCUPIED, UNEXPLORED


@pytest.fixture(scope="module")
def plan():
    return generate_floorplan(42, size=192)


@pytest.fixture(scope="module")
def moderate_pair(plan):
    return explore_and_map(plan, ErrorConfig(rng_seed=7))


class TestFloorPlan:
    def test_deterministic(self):
        a = generate_floorplan(5)
        b = generate_floorplan(5)
        assert np.array_equal(a.wall, b.wall)
        assert np.array_equal(a.door, b.door)

    def test_all_free_cells_reachable(self):
        for seed in range(6):
            p = generate_floorplan(seed)
            free = ~p.wall
            labels, n = ndimage.label(free, structure=ndimage.generate_binary_structure(2, 1))
            assert n == 1, f"seed {seed}: disconnected free space"

    def test_boundary_fully_walled(self):
        for seed in range(4):
            p = generate_floorplan(seed)
            assert p.wall[0].all() and p.wall[-1].all()
            assert p.wall[:, 0].all() and p.wall[:, -1].all()

    def test_room_count_in_range(self):
        counts = {len(generate_floorplan(s).rooms) for s in range(10)}
        assert all(3 <= c <= 12 for c in counts)

    def test_door_widths(self):
        p = generate_floorplan(3)
        # every gap is 0.8-1.2 m: 32..48 cells, two wall rows deep
        cells_per_m = 1.0 / p.resolution
        labels, n = ndimage.label(p.door, structure=np.ones((3, 3), bool))
        for i in range(1, n + 1):
            run = (labels == i).sum() / 2  # thickness-2 walls
            assert 0.8 * cells_per_m <= run <= 1.2 * cells_per_m


class TestExplore:
    def test_zero_error_identity(self, plan):
        cfg = ErrorConfig(noise_flip_prob=0, linear_drift=0, angular_drift=0,
                          completion_fraction=1.0, accidental_ray_prob=0, rng_seed=3)
        pair = explore_and_map(plan, cfg)
        assert np.array_equal(pair.erroneous.pixels, pair.clean.pixels)
        assert pair.achieved_completion >= 0.99

    def test_completion_fraction_honored(self, plan):
        cfg = ErrorConfig(noise_flip_prob=0, linear_drift=0, angular_drift=0,
                          completion_fraction=0.5, accidental_ray_prob=0, rng_seed=4)
        pair = explore_and_map(plan, cfg)
        free = ~plan.wall
        explored_free = ((pair.clean.pixels != UNEXPLORED) & free).sum()
        frac = explored_free / free.sum()
        assert 0.40 <= frac <= 0.60

    def test_clean_map_consistent_with_plan(self, moderate_pair, plan):
        occupied = moderate_pair.clean.pixels == OCCUPIED
        wall_dilated = ndimage.binary_dilation(plan.wall, np.ones((3, 3), bool))
        assert not (occupied & ~wall_dilated).any()

    def test_angular_drift_rotates_walls(self, plan):
        # principal wall directions: clean stays axis-aligned, erroneous
        # gains rotated structure as the path lengthens
        cfg = ErrorConfig(noise_flip_prob=0, linear_drift=0,
                          angular_drift=np.deg2rad(2.0), completion_fraction=0.9,
                          accidental_ray_prob=0, rng_seed=5)
        pair = explore_and_map(plan, cfg)

        def offaxis_fraction(px):
            occ = px == OCCUPIED
            rows, cols = np.nonzero(occ)
            if len(rows) < 10:
                return 0.0
            same_row = 0
            total = 0
            for r, c in zip(rows[:400], cols[:400]):
                right = occ[r, c + 1] if c + 1 < occ.shape[1] else False
                down = occ[r + 1, c] if r + 1 < occ.shape[0] else False
                diag = (occ[r + 1, c + 1] if (r + 1 < occ.shape[0] and c + 1 < occ.shape[1])
                        else False)
                if right or down or diag:
                    total += 1
                    if diag and not (right or down):
                        same_row += 1
            return same_row / max(total, 1)

        assert offaxis_fraction(pair.erroneous.pixels) > offaxis_fraction(pair.clean.pixels)

    def test_noise_only_produces_flips(self, plan):
        cfg = ErrorConfig(noise_flip_prob=0.05, linear_drift=0, angular_drift=0,
                          completion_fraction=0.8, accidental_ray_prob=0, rng_seed=6)
        pair = explore_and_map(plan, cfg)
        diff = pair.erroneous.pixels != pair.clean.pixels
        assert diff.any()

    def test_deterministic_per_seed(self, plan):
        cfg = ErrorConfig(rng_seed=9)
        a = explore_and_map(plan, cfg)
        b = explore_and_map(plan, cfg)
        assert np.array_equal(a.erroneous.pixels, b.erroneous.pixels)
        assert np.array_equal(a.clean.pixels, b.clean.pixels)


class TestAugment:
    def test_six_samples(self, moderate_pair):
        out = augment(moderate_pair, seed=1)
        assert len(out) == 6

    def test_double_90_is_180(self, moderate_pair):
        out = augment(moderate_pair, seed=1)
        rot90_twice = np.rot90(out[1].clean.pixels)
        assert np.array_equal(rot90_twice, out[2].clean.pixels)

    def test_crop_alignment(self, moderate_pair):
        out = augment(moderate_pair, seed=2)
        crop = out[5]
        assert crop.clean.pixels.shape == crop.erroneous.pixels.shape
        h, w = crop.clean.pixels.shape
        H, W = moderate_pair.clean.pixels.shape
        assert h * w >= 0.6 * H * W * 0.95  # rounding slack
        # the crop is a literal window of the original pair
        found = False
        for r0 in range(H - h + 1):
            row = moderate_pair.clean.pixels[r0]
            for c0 in range(W - w + 1):
                if np.array_equal(
                    moderate_pair.clean.pixels[r0 : r0 + h, c0 : c0 + w], crop.clean.pixels
                ):
                    if np.array_equal(
                        moderate_pair.erroneous.pixels[r0 : r0 + h, c0 : c0 + w],
                        crop.erroneous.pixels,
                    ):
                        found = True
                        break
            if found:
                break
        assert found

    def test_rotation_fill_is_unexplored(self, moderate_pair):
        out = augment(moderate_pair, seed=3)
        free_rot = out[4].clean.pixels
        assert free_rot[0, 0] == UNEXPLORED  # corners fall outside the frame


class TestDataset:
    def test_bookkeeping_and_determinism(self, tmp_path):
        out1 = str(tmp_path / "d1")
        out2 = str(tmp_path / "d2")
        m1 = generate_dataset(3, out1, master_seed=11, size=128)
        m2 = generate_dataset(3, out2, master_seed=11, size=128)
        files1 = sorted(os.listdir(out1))
        assert len([f for f in files1 if f.endswith(".png")]) == 6
        entries = read_manifest(m1)
        assert len(entries) == 3
        assert open(m1, "rb").read() == open(m2, "rb").read()
        for name in files1:
            a = open(os.path.join(out1, name), "rb").read()
            b = open(os.path.join(out2, name), "rb").read()
            assert a == b, name

    def test_completion_sweep_spans_range(self, tmp_path):
        out = str(tmp_path / "sweep")
        m = generate_dataset(8, out, master_seed=13, size=128,
                             completion_range=(0.3, 1.0))
        comp = [e["completion"] for e in read_manifest(m)]
        assert min(comp) < 0.55 and max(comp) > 0.75
