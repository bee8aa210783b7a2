"""End-to-end pipeline: frames in, posed scans into the grid, cleaned maps out.

Each frame is box-filtered, voxel-downsampled, registered scan-to-scan
against the previous filtered cloud, then refined scan-to-submap from that
warm start. The planar reduction of the world pose places the frame's 2D
projection into the occupancy grid. Registration failures fall back to a
constant-velocity motion model so the pipeline never halts. Cleaning runs
on snapshots, optionally on a background worker, and never mutates SLAM
state.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import gicp, mapping, pointcloud, projection
from .cleaner import clean_map
from .gridimage import GridImage
from .se3 import SE3Transform, se3_to_pose2d


@dataclass
class SessionConfig:
    box_half_extent: float = 0.5
    voxel_resolution: float = 0.25
    num_bins: int = 720
    z_band: tuple = (0.1, 2.0)
    k_neighbors: int = 10
    keyframe_translation: float = 1.0
    keyframe_yaw_deg: float = 30.0
    submap_keyframes: int = 10
    map_resolution: float = 0.05
    clean_cadence: int = 10  # frames between scheduled cleans; 0 disables

    @staticmethod
    def from_file(path: str) -> "SessionConfig":
        """Line-oriented `key: value` config; unknown keys rejected."""
        cfg = SessionConfig()
        fields = set(cfg.__dataclass_fields__)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if ":" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key: value'")
                key, value = (t.strip() for t in line.split(":", 1))
                if key not in fields:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                current = getattr(cfg, key)
                if key == "z_band":
                    parts = value.split()
                    setattr(cfg, key, (float(parts[0]), float(parts[1])))
                elif isinstance(current, int):
                    setattr(cfg, key, int(value))
                else:
                    setattr(cfg, key, float(value))
        return cfg


@dataclass
class FrameResult:
    pose: SE3Transform
    pose2d: object
    registered: bool
    warning: str = ""


class Session:
    """Single-writer SLAM session over a frame sequence."""

    def __init__(self, config: SessionConfig = None, cleaner=None):
        self.config = config or SessionConfig()
        self.cleaner = cleaner
        self.world_pose = SE3Transform.identity()
        self.submap = gicp.Submap(
            voxel_resolution=self.config.voxel_resolution,
            max_keyframes_used=self.config.submap_keyframes,
            k_neighbors=self.config.k_neighbors,
        )
        self.grid = mapping.OccupancyGrid(resolution=self.config.map_resolution)
        self.trail = mapping.PoseTrail()
        self.frame_count = 0
        self.warnings: list[str] = []
        self._prev_filtered = None
        self._prev_cov = None
        self._prev_tree = None
        self._pose_history: list[SE3Transform] = []
        self._latest_clean: tuple[int, GridImage] = None
        self._clean_lock = threading.Lock()
        self._clean_pending = None
        self._clean_thread = None

    # -- odometry ---------------------------------------------------------

    def _constant_velocity_guess(self) -> SE3Transform:
        if len(self._pose_history) < 2:
            return SE3Transform.identity()
        prev, last = self._pose_history[-2], self._pose_history[-1]
        return prev.inverse().compose(last)

    def process_frame(self, cloud: pointcloud.PointCloud3D) -> FrameResult:
        """Run the full per-frame pipeline and integrate the scan."""
        if self.trail.entries and cloud.timestamp <= self.trail.entries[-1][0]:
            raise ValueError("frame timestamps must strictly increase")

        boxed = pointcloud.box_filter(cloud, self.config.box_half_extent)
        filtered = pointcloud.voxel_downsample(boxed, self.config.voxel_resolution)

        warning = ""
        registered = True
        cov_s = None
        try:
            cov_s = gicp.estimate_covariances(filtered, self.config.k_neighbors)
        except gicp.DegenerateCloudError:
            pass

        if self.frame_count == 0:
            self.world_pose = SE3Transform.identity()
        else:
            try:
                if cov_s is None or self._prev_cov is None:
                    raise gicp.RegistrationError("too few points for covariances")
                motion = gicp.register_scan_to_scan(
                    filtered,
                    self._prev_filtered,
                    cov_s=cov_s,
                    cov_t=self._prev_cov,
                    target_tree=self._prev_tree,
                )
            except gicp.RegistrationError as exc:
                registered = False
                warning = f"scan-to-scan failed ({exc}); constant-velocity fallback"
                motion = self._constant_velocity_guess()
            guess = self.world_pose.compose(motion)
            try:
                if cov_s is None:
                    raise gicp.RegistrationError("too few points for covariances")
                self.world_pose = gicp.register_scan_to_submap(
                    filtered, self.submap, guess, cov_s=cov_s
                )
            except gicp.RegistrationError as exc:
                registered = False
                warning = f"scan-to-submap failed ({exc}); using warm-start pose"
                self.world_pose = guess
        if warning:
            self.warnings.append(f"frame {self.frame_count}: {warning}")

        if cov_s is not None:
            gicp.maybe_add_keyframe(
                self.submap,
                self.world_pose,
                filtered,
                translation_threshold=self.config.keyframe_translation,
                yaw_threshold=math.radians(self.config.keyframe_yaw_deg),
            )

        pose2d = se3_to_pose2d(self.world_pose)
        scan = projection.project_to_2d(
            boxed, num_bins=self.config.num_bins, z_band=self.config.z_band
        )
        self.grid.integrate_scan(scan, pose2d)
        self.trail.append(cloud.timestamp, pose2d)

        self._prev_filtered = filtered
        self._prev_cov = cov_s
        self._prev_tree = cKDTree(filtered.points) if cov_s is not None else None
        self._pose_history.append(self.world_pose)
        self.frame_count += 1

        if (
            self.cleaner is not None
            and self.config.clean_cadence > 0
            and self.frame_count % self.config.clean_cadence == 0
        ):
            self._schedule_clean()
        return FrameResult(self.world_pose, pose2d, registered, warning)

    # -- cleaning ---------------------------------------------------------

    def request_clean(self, cleaner=None) -> GridImage:
        """Clean the current snapshot synchronously and cache the result."""
        cleaner = cleaner or self.cleaner
        if cleaner is None:
            raise ValueError("no cleaner configured")
        seq = self.frame_count
        snapshot = self.grid.copy()
        cleaned = clean_map(snapshot, cleaner)
        with self._clean_lock:
            if self._latest_clean is None or seq >= self._latest_clean[0]:
                self._latest_clean = (seq, cleaned)
        return cleaned

    def latest_clean(self) -> tuple[int, GridImage]:
        """Newest completed clean as (snapshot sequence number, image)."""
        with self._clean_lock:
            return self._latest_clean

    def _schedule_clean(self) -> None:
        """Queue an asynchronous clean of the current snapshot.

        At most one clean runs at a time; a newer request supersedes a
        queued one. Frame processing never blocks on this.
        """
        snapshot = self.grid.copy()
        seq = self.frame_count
        with self._clean_lock:
            self._clean_pending = (seq, snapshot)
            if self._clean_thread is None or not self._clean_thread.is_alive():
                self._clean_thread = threading.Thread(target=self._clean_worker, daemon=True)
                self._clean_thread.start()

    def _clean_worker(self) -> None:
        while True:
            with self._clean_lock:
                job = self._clean_pending
                self._clean_pending = None
            if job is None:
                return
            seq, snapshot = job
            try:
                cleaned = clean_map(snapshot, self.cleaner)
            except Exception as exc:  # surfaced via warnings, never kills SLAM
                with self._clean_lock:
                    self.warnings.append(f"clean at frame {seq} failed: {exc}")
                continue
            with self._clean_lock:
                if self._latest_clean is None or seq >= self._latest_clean[0]:
                    self._latest_clean = (seq, cleaned)

    def finalize(self) -> None:
        """Drain the clean worker and run a final clean if configured."""
        t = self._clean_thread
        if t is not None:
            t.join()
        if self.cleaner is not None:
            self.request_clean()


def run_sequence(
    frames: list[pointcloud.PointCloud3D],
    config: SessionConfig = None,
    cleaner=None,
) -> Session:
    session = Session(config, cleaner)
    for cloud in frames:
        session.process_frame(cloud)
    session.finalize()
    return session
