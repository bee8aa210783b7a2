import numpy as np
import pytest
from conftest import corridor_world, sample_frame

from gridforge.cleaner import MorphologicalCleaner
from gridforge.pointcloud import PointCloud3D
from gridforge.session import Session, SessionConfig, run_sequence

CFG = SessionConfig(z_band=(-0.5, 1.5))


def corridor_frames(world, count, step=0.2, seed0=100):
    frames = []
    for i in range(count):
        cl = sample_frame(world, (i * step, 0.0, 0.8), seed=seed0 + i)
        frames.append(PointCloud3D(cl.points, timestamp=i * 0.1))
    return frames


class TestProcessFrame:
    def test_first_frame_initializes(self, corridor):
        session = Session(CFG)
        result = session.process_frame(corridor_frames(corridor, 1)[0])
        assert np.linalg.norm(result.pose.translation) == 0.0
        assert len(session.submap) == 1
        assert session.grid.explored.any()
        assert len(session.trail) == 1

    def test_static_sensor_near_identity_motion(self, corridor):
        session = Session(CFG)
        f0 = sample_frame(corridor, (0, 0, 0.8), seed=500)
        f1 = sample_frame(corridor, (0, 0, 0.8), seed=501)
        session.process_frame(PointCloud3D(f0.points, timestamp=0.0))
        result = session.process_frame(PointCloud3D(f1.points, timestamp=0.1))
        assert np.linalg.norm(result.pose.translation) < 1e-3

    def test_corridor_trajectory(self, corridor):
        frames = corridor_frames(corridor, 20)
        session = run_sequence(frames, CFG)
        final = session.trail.entries[-1][1]
        assert final.x == pytest.approx(3.8, rel=0.02)
        assert abs(final.y) < 0.05

    def test_timestamps_must_increase(self, corridor):
        session = Session(CFG)
        frames = corridor_frames(corridor, 2)
        session.process_frame(frames[0])
        with pytest.raises(ValueError):
            session.process_frame(PointCloud3D(frames[1].points, timestamp=0.0))

    def test_registration_failure_falls_back(self, corridor):
        session = Session(CFG)
        frames = corridor_frames(corridor, 3)
        session.process_frame(frames[0])
        session.process_frame(frames[1])
        # a tiny degenerate cloud cannot register; constant-velocity keeps going
        junk = PointCloud3D(np.random.default_rng(0).normal(10, 0.1, (5, 3)),
                            timestamp=0.9)
        result = session.process_frame(junk)
        assert not result.registered
        assert session.warnings
        assert len(session.trail) == 3

    def test_pipeline_deterministic(self, corridor):
        frames = corridor_frames(corridor, 8)
        a = run_sequence(frames, CFG)
        b = run_sequence(frames, CFG)
        for (ta, pa), (tb, pb) in zip(a.trail, b.trail):
            assert ta == tb and pa == pb
        assert np.array_equal(a.grid.log_odds, b.grid.log_odds)


class TestCleaning:
    def test_request_clean_deterministic(self, corridor):
        frames = corridor_frames(corridor, 3)
        session = Session(CFG)
        for f in frames:
            session.process_frame(f)
        a = session.request_clean(MorphologicalCleaner())
        b = session.request_clean(MorphologicalCleaner())
        assert np.array_equal(a.pixels, b.pixels)

    def test_cadence_schedules_cleans(self, corridor):
        cfg = SessionConfig(z_band=(-0.5, 1.5), clean_cadence=2)
        session = Session(cfg, cleaner=MorphologicalCleaner())
        frames = corridor_frames(corridor, 5)
        for f in frames:
            session.process_frame(f)
        session.finalize()
        seq, img = session.latest_clean()
        assert seq == 5  # finalize cleans the final snapshot
        assert img.pixels.shape == (session.grid.height, session.grid.width)

    def test_cleaning_is_read_only(self, corridor):
        frames = corridor_frames(corridor, 6)
        bare = run_sequence(frames, CFG, cleaner=None)
        cfg = SessionConfig(z_band=(-0.5, 1.5), clean_cadence=2)
        cleaned = run_sequence(frames, cfg, cleaner=MorphologicalCleaner())
        for (ta, pa), (tb, pb) in zip(bare.trail, cleaned.trail):
            assert ta == tb and pa == pb
        assert np.array_equal(bare.grid.log_odds, cleaned.grid.log_odds)

    def test_clean_snapshot_consistency(self, corridor):
        # the async clean must match a synchronous clean of the same frame's
        # snapshot exactly (no mixed-frame cells)
        frames = corridor_frames(corridor, 4)
        cfg = SessionConfig(z_band=(-0.5, 1.5), clean_cadence=4)
        session = Session(cfg, cleaner=MorphologicalCleaner())
        replay = Session(CFG)
        for f in frames:
            session.process_frame(f)
            replay.process_frame(f)
        session.finalize()
        seq, cleaned = session.latest_clean()
        from gridforge.cleaner import clean_map

        expect = clean_map(replay.grid, MorphologicalCleaner())
        assert seq == 4
        assert np.array_equal(cleaned.pixels, expect.pixels)

    def test_sequence_number_bounded_by_frames(self, corridor):
        cfg = SessionConfig(z_band=(-0.5, 1.5), clean_cadence=1)
        session = Session(cfg, cleaner=MorphologicalCleaner())
        for f in corridor_frames(corridor, 3):
            session.process_frame(f)
            latest = session.latest_clean()
            if latest is not None:
                assert latest[0] <= session.frame_count
        session.finalize()


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text(
            "box_half_extent: 0.4\n"
            "num_bins: 360\n"
            "z_band: -0.5 1.5\n"
            "clean_cadence: 5\n"
        )
        cfg = SessionConfig.from_file(str(p))
        assert cfg.box_half_extent == 0.4
        assert cfg.num_bins == 360
        assert cfg.z_band == (-0.5, 1.5)
        assert cfg.clean_cadence == 5
        assert cfg.voxel_resolution == 0.25  # untouched default

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("warp_speed: 9\n")
        with pytest.raises(ValueError, match="unknown config key"):
            SessionConfig.from_file(str(p))
