"""Rigid-body transforms: SE(3) for registration, planar poses for mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ORTHO_TOL = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = float(a) % (2 * np.pi)
    if a > np.pi:
        a -= 2 * np.pi
    elif a <= -np.pi:
        a += 2 * np.pi
    return a


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


class SE3Transform:
    """Proper rigid transform: 3x3 rotation (orthonormal, det +1) + translation."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation=None, translation=None, check: bool = True):
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64).reshape(3)
        if check:
            err = np.abs(R.T @ R - np.eye(3)).max()
            if err > 1e-6 or np.linalg.det(R) < 0:
                raise ValueError(f"rotation not orthonormal (|R^T R - I| = {err:.3g})")
            if err > _ORTHO_TOL:
                # Re-project onto SO(3) to keep long compositions clean.
                U, _, Vt = np.linalg.svd(R)
                R = U @ Vt
        self.rotation = R
        self.translation = t

    @staticmethod
    def identity() -> "SE3Transform":
        return SE3Transform(check=False)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) block of points."""
        return points @ self.rotation.T + self.translation

    def compose(self, other: "SE3Transform") -> "SE3Transform":
        """Composition self * other: apply `other` first, then `self`."""
        return SE3Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            check=False,
        )

    def inverse(self) -> "SE3Transform":
        Rt = self.rotation.T
        return SE3Transform(Rt, -Rt @ self.translation, check=False)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __repr__(self):
        t = self.translation
        return f"SE3Transform(t=[{t[0]:.4f}, {t[1]:.4f}, {t[2]:.4f}])"


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues rotation from an axis-angle vector."""
    theta = np.linalg.norm(omega)
    if theta < 1e-12:
        return np.eye(3) + skew(omega)
    K = skew(omega / theta)
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


def se3_exp(xi: np.ndarray) -> SE3Transform:
    """Exponential of a twist [omega, v] (rotation first, translation second)."""
    omega, v = xi[:3], xi[3:]
    R = so3_exp(omega)
    theta = np.linalg.norm(omega)
    if theta < 1e-12:
        V = np.eye(3) + 0.5 * skew(omega)
    else:
        K = skew(omega / theta)
        V = (
            np.eye(3)
            + ((1 - np.cos(theta)) / theta) * K
            + ((theta - np.sin(theta)) / theta) * (K @ K)
        )
    return SE3Transform(R, V @ v, check=False)


def rotation_from_yaw(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def se3_from_pose2d(pose: Pose2D, z: float = 0.0) -> SE3Transform:
    return SE3Transform(rotation_from_yaw(pose.yaw), [pose.x, pose.y, z], check=False)


def se3_to_pose2d(X: SE3Transform) -> Pose2D:
    """Planar reduction: keep x, y and the heading; roll/pitch/z are dropped."""
    R = X.rotation
    return Pose2D(X.translation[0], X.translation[1], np.arctan2(R[1, 0], R[0, 0]))


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, radians in [0, pi]."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
