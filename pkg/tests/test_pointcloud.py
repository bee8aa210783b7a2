import numpy as np
import pytest

from gridforge.pointcloud import (
    PointCloud3D,
    PointCloudError,
    box_filter,
    load_pointcloud,
    load_sequence,
    save_pointcloud,
    voxel_downsample,
)


def write_cloud_file(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return str(path)


class TestLoad:
    def test_three_records(self, tmp_path):
        p = write_cloud_file(tmp_path / "a.txt", [
            "FIELDS x y z intensity",
            "POINTS 3",
            "1.0 2.0 3.0 0.5",
            "-1.0 0.0 0.25 1.0",
            "0.0 0.0 0.0 0.0",
        ])
        cloud = load_pointcloud(p)
        assert len(cloud) == 3
        assert np.allclose(cloud.points[0], [1.0, 2.0, 3.0])
        assert np.allclose(cloud.intensity, [0.5, 1.0, 0.0])

    def test_empty_data_section(self, tmp_path):
        p = write_cloud_file(tmp_path / "e.txt", ["FIELDS x y z intensity", "POINTS 0"])
        assert len(load_pointcloud(p)) == 0

    def test_nan_z_names_line(self, tmp_path):
        p = write_cloud_file(tmp_path / "n.txt", [
            "FIELDS x y z intensity",
            "POINTS 2",
            "1 2 3 0",
            "1 2 nan 0",
        ])
        with pytest.raises(PointCloudError, match=":4"):
            load_pointcloud(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PointCloudError, match="not found"):
            load_pointcloud(str(tmp_path / "nope.txt"))

    def test_malformed_header(self, tmp_path):
        p = write_cloud_file(tmp_path / "h.txt", ["FIELDS x y intensity", "POINTS 0"])
        with pytest.raises(PointCloudError, match="FIELDS"):
            load_pointcloud(p)

    def test_non_numeric_field_names_line(self, tmp_path):
        p = write_cloud_file(tmp_path / "b.txt", [
            "FIELDS x y z intensity",
            "POINTS 1",
            "1 two 3 0",
        ])
        with pytest.raises(PointCloudError, match=":3"):
            load_pointcloud(p)

    def test_roundtrip_with_timestamp(self, tmp_path):
        cloud = PointCloud3D(np.random.default_rng(0).normal(size=(17, 3)),
                             np.abs(np.random.default_rng(1).normal(size=17)),
                             timestamp=4.25)
        path = str(tmp_path / "rt.txt")
        save_pointcloud(cloud, path)
        back = load_pointcloud(path)
        assert back.timestamp == 4.25
        assert np.array_equal(back.points, cloud.points)
        assert np.array_equal(back.intensity, cloud.intensity)

    def test_sequence_assigns_increasing_timestamps(self, tmp_path):
        for name in ("b.txt", "a.txt", "c.txt"):
            write_cloud_file(tmp_path / name, [
                "FIELDS x y z intensity", "POINTS 1", "1 0 0 0",
            ])
        frames = load_sequence(str(tmp_path))
        ts = [f.timestamp for f in frames]
        assert ts == sorted(ts) and len(set(ts)) == 3


class TestBoxFilter:
    def test_inside_point_removed(self):
        cloud = PointCloud3D([[0.2, 0.1, 0.0]])
        assert len(box_filter(cloud, 0.5)) == 0

    def test_far_point_kept(self):
        cloud = PointCloud3D([[10.0, 0.0, 0.0]])
        assert len(box_filter(cloud, 0.5)) == 1

    def test_all_inside_gives_empty(self):
        rng = np.random.default_rng(3)
        cloud = PointCloud3D(rng.uniform(-0.4, 0.4, (50, 3)))
        assert len(box_filter(cloud, 0.5)) == 0

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        cloud = PointCloud3D(rng.normal(0, 2, (500, 3)))
        once = box_filter(cloud, 0.5)
        twice = box_filter(once, 0.5)
        assert np.array_equal(once.points, twice.points)

    def test_order_preserved(self):
        cloud = PointCloud3D([[5, 0, 0], [0.1, 0, 0], [3, 1, 1], [-2, 0, 0]])
        out = box_filter(cloud, 0.5)
        assert np.array_equal(out.points, [[5, 0, 0], [3, 1, 1], [-2, 0, 0]])

    def test_boundary_is_open(self):
        # max(|x|,|y|,|z|) must strictly exceed the half extent to survive
        cloud = PointCloud3D([[0.5, 0.0, 0.0], [0.5000001, 0, 0]])
        out = box_filter(cloud, 0.5)
        assert len(out) == 1


class TestVoxelDownsample:
    def test_same_voxel_centroid(self):
        cloud = PointCloud3D([[0.01, 0, 0], [0.02, 0, 0]], [2.0, 4.0])
        out = voxel_downsample(cloud, 0.25)
        assert len(out) == 1
        assert np.allclose(out.points[0], [0.015, 0, 0])
        assert np.allclose(out.intensity[0], 3.0)

    def test_empty(self):
        out = voxel_downsample(PointCloud3D(np.empty((0, 3))), 0.25)
        assert len(out) == 0

    def test_dense_room_scan_order_of_magnitude(self):
        # ~30k points over a room-scale surface set reduces to thousands of
        # voxels at 0.25 m
        from conftest import room_cloud

        cloud = room_cloud(30000, seed=11)
        out = voxel_downsample(cloud, 0.25)
        assert 2500 <= len(out) <= 25000

    def test_count_never_grows(self):
        rng = np.random.default_rng(9)
        cloud = PointCloud3D(rng.normal(0, 3, (2000, 3)))
        out = voxel_downsample(cloud, 0.25)
        assert len(out) <= len(cloud)

    def test_output_inside_occupied_voxel(self):
        rng = np.random.default_rng(10)
        cloud = PointCloud3D(rng.normal(0, 3, (1000, 3)))
        res = 0.25
        out = voxel_downsample(cloud, res)
        in_keys = set(map(tuple, np.floor(cloud.points / res).astype(int)))
        for p in out.points:
            assert tuple(np.floor(p / res).astype(int)) in in_keys

    def test_centroid_within_inputs_hull_bounds(self):
        rng = np.random.default_rng(12)
        cloud = PointCloud3D(rng.normal(0, 1, (500, 3)))
        out = voxel_downsample(cloud, 0.5)
        assert out.points.min() >= cloud.points.min() - 1e-12
        assert out.points.max() <= cloud.points.max() + 1e-12

    def test_negative_coordinates(self):
        cloud = PointCloud3D([[-0.01, -0.02, -0.03], [-0.02, -0.01, -0.04]])
        out = voxel_downsample(cloud, 0.25)
        assert len(out) == 1
        assert np.allclose(out.points[0], [-0.015, -0.015, -0.035])


class TestInvariants:
    def test_intensity_must_be_nonnegative(self):
        with pytest.raises(PointCloudError):
            PointCloud3D([[0, 0, 0]], [-1.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(PointCloudError):
            PointCloud3D([[np.inf, 0, 0]])
