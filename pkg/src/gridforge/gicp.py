"""Generalized-ICP scan matching with a keyframe submap.

Egomotion is estimated in two stages: scan-to-scan registration between
consecutive filtered clouds gives a relative transform, which seeds a
scan-to-submap refinement against an aggregate of nearby keyframes. The
cost for both stages is the Mahalanobis objective

    E(X) = sum_i d_i^T (C_t_i + R C_s_i R^T)^-1 d_i,   d_i = p_t_i - X p_s_i

minimised by Gauss-Newton over SE(3) with a step-halving line search.
Per-point covariances use the plane-regularized recipe: the local
neighborhood covariance with eigenvalues replaced by (eps, 1, 1).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .pointcloud import PointCloud3D, voxel_downsample
from .se3 import SE3Transform, rotation_angle, se3_exp, se3_to_pose2d, skew

COV_EPSILON = 1e-3
MAX_CORRESPONDENCE_DIST = 1.0
CONVERGENCE_TOL = 1e-6
MAX_ITERATIONS = 64
MIN_CORRESPONDENCES = 10


class RegistrationError(RuntimeError):
    """Scan matching could not find enough valid correspondences."""


class DegenerateCloudError(ValueError):
    """Cloud too small for covariance estimation."""


def _workers() -> int:
    cap = os.environ.get("GRIDFORGE_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            pass
    return -1


def _inv3x3(M: np.ndarray) -> np.ndarray:
    """Batched closed-form inverse of (N, 3, 3) matrices via the adjugate."""
    a, b, c = M[:, 0, 0], M[:, 0, 1], M[:, 0, 2]
    d, e, f = M[:, 1, 0], M[:, 1, 1], M[:, 1, 2]
    g, h, i = M[:, 2, 0], M[:, 2, 1], M[:, 2, 2]
    A = e * i - f * h
    B = -(d * i - f * g)
    C = d * h - e * g
    det = a * A + b * B + c * C
    if np.any(np.abs(det) < 1e-30):
        raise FloatingPointError("singular combined covariance in GICP weight")
    inv = np.empty_like(M)
    inv[:, 0, 0] = A
    inv[:, 0, 1] = -(b * i - c * h)
    inv[:, 0, 2] = b * f - c * e
    inv[:, 1, 0] = B
    inv[:, 1, 1] = a * i - c * g
    inv[:, 1, 2] = -(a * f - c * d)
    inv[:, 2, 0] = C
    inv[:, 2, 1] = -(a * h - b * g)
    inv[:, 2, 2] = a * e - b * d
    inv /= det[:, None, None]
    return inv


@njit(cache=True)
def _plane_regularize(pts, idx, eps, out):
    """Per point: k-NN sample covariance, eigendecomposed (Jacobi), with
    eigenvalues replaced by (eps, 1, 1). Writing C = I + (eps-1) n n^T with
    n the smallest-eigenvalue direction realizes that directly."""
    n, k = idx.shape
    A = np.empty((3, 3))
    V = np.empty((3, 3))
    for i in range(n):
        mx = my = mz = 0.0
        for j in range(k):
            p = idx[i, j]
            mx += pts[p, 0]
            my += pts[p, 1]
            mz += pts[p, 2]
        mx /= k
        my /= k
        mz /= k
        cxx = cxy = cxz = cyy = cyz = czz = 0.0
        for j in range(k):
            p = idx[i, j]
            dx = pts[p, 0] - mx
            dy = pts[p, 1] - my
            dz = pts[p, 2] - mz
            cxx += dx * dx
            cxy += dx * dy
            cxz += dx * dz
            cyy += dy * dy
            cyz += dy * dz
            czz += dz * dz
        A[0, 0] = cxx / k
        A[0, 1] = cxy / k
        A[0, 2] = cxz / k
        A[1, 0] = A[0, 1]
        A[1, 1] = cyy / k
        A[1, 2] = cyz / k
        A[2, 0] = A[0, 2]
        A[2, 1] = A[1, 2]
        A[2, 2] = czz / k
        scale = max(abs(A[0, 0]), max(abs(A[1, 1]), abs(A[2, 2])))
        V[:] = 0.0
        V[0, 0] = V[1, 1] = V[2, 2] = 1.0
        if scale > 0.0:
            for _ in range(30):
                off = abs(A[0, 1]) + abs(A[0, 2]) + abs(A[1, 2])
                if off < 1e-14 * scale:
                    break
                for p in range(2):
                    for q in range(p + 1, 3):
                        apq = A[p, q]
                        if abs(apq) < 1e-300:
                            continue
                        theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                        t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                        c = 1.0 / np.sqrt(1.0 + t * t)
                        s = t * c
                        for r in range(3):
                            arp = A[r, p]
                            arq = A[r, q]
                            A[r, p] = c * arp - s * arq
                            A[r, q] = s * arp + c * arq
                        for r in range(3):
                            apr = A[p, r]
                            aqr = A[q, r]
                            A[p, r] = c * apr - s * aqr
                            A[q, r] = s * apr + c * aqr
                        for r in range(3):
                            vrp = V[r, p]
                            vrq = V[r, q]
                            V[r, p] = c * vrp - s * vrq
                            V[r, q] = s * vrp + c * vrq
        m = 0
        if A[1, 1] < A[m, m]:
            m = 1
        if A[2, 2] < A[m, m]:
            m = 2
        nx, ny, nz = V[0, m], V[1, m], V[2, m]
        f = eps - 1.0
        out[i, 0, 0] = 1.0 + f * nx * nx
        out[i, 0, 1] = f * nx * ny
        out[i, 0, 2] = f * nx * nz
        out[i, 1, 0] = out[i, 0, 1]
        out[i, 1, 1] = 1.0 + f * ny * ny
        out[i, 1, 2] = f * ny * nz
        out[i, 2, 0] = out[i, 0, 2]
        out[i, 2, 1] = out[i, 1, 2]
        out[i, 2, 2] = 1.0 + f * nz * nz


def estimate_covariances(cloud: PointCloud3D, k_neighbors: int = 10) -> np.ndarray:
    """Plane-regularized covariance for every point.

    Each point's k-NN sample covariance is eigendecomposed and its
    eigenvalues replaced by (eps, 1, 1), eps on the smallest-variance
    (normal) direction. Returns an (N, 3, 3) stack of SPD matrices.
    """
    if k_neighbors < 3:
        raise ValueError("k_neighbors must be >= 3")
    pts = cloud.points
    n = len(pts)
    if n < k_neighbors:
        raise DegenerateCloudError(
            f"cloud of {n} points too small for k={k_neighbors} covariance estimation"
        )
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k_neighbors, workers=_workers())
    out = np.empty((n, 3, 3))
    _plane_regularize(np.ascontiguousarray(pts), np.ascontiguousarray(idx), COV_EPSILON, out)
    return out


def gicp_residual(
    X: SE3Transform,
    source: PointCloud3D,
    target: PointCloud3D,
    correspondences: np.ndarray,
    cov_s: np.ndarray,
    cov_t: np.ndarray,
) -> float:
    """Mahalanobis registration cost for explicit correspondence pairs.

    correspondences is an (M, 2) array of (source_index, target_index).
    The rotation part of X is applied to the source covariances and the full
    transform to the source points.
    """
    corr = np.asarray(correspondences, dtype=np.int64).reshape(-1, 2)
    si, ti = corr[:, 0], corr[:, 1]
    d = target.points[ti] - X.apply(source.points[si])
    R = X.rotation
    combined = cov_t[ti] + np.einsum("ij,njk,lk->nil", R, cov_s[si], R)
    W = _inv3x3(combined)
    return float(np.einsum("ni,nij,nj->", d, W, d))


@njit(cache=True)
def _gn_accumulate(src, tgt, cov_s_sel, cov_t_sel, R, t, H, g, W_out):
    """One linearization pass: weights, residual cost, normal equations.

    Right-multiplicative perturbation X <- X * Exp([omega, v]) gives
    dr/domega = R [p_s]_x and dr/dv = -R per correspondence.
    """
    n = src.shape[0]
    err = 0.0
    J = np.empty((3, 6))
    for i in range(n):
        px, py, pz = src[i, 0], src[i, 1], src[i, 2]
        # moved = R p + t; r = q - moved
        r0 = tgt[i, 0] - (R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0])
        r1 = tgt[i, 1] - (R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1])
        r2 = tgt[i, 2] - (R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2])

        # combined covariance C = C_t + R C_s R^T
        RC = R @ cov_s_sel[i]
        C = cov_t_sel[i] + RC @ R.T
        a, bb, c = C[0, 0], C[0, 1], C[0, 2]
        d, e, f = C[1, 0], C[1, 1], C[1, 2]
        gg, h, ii = C[2, 0], C[2, 1], C[2, 2]
        A = e * ii - f * h
        B = -(d * ii - f * gg)
        Cc = d * h - e * gg
        det = a * A + bb * B + c * Cc
        inv_det = 1.0 / det
        w00 = A * inv_det
        w01 = -(bb * ii - c * h) * inv_det
        w02 = (bb * f - c * e) * inv_det
        w11 = (a * ii - c * gg) * inv_det
        w12 = -(a * f - c * d) * inv_det
        w22 = (a * e - bb * d) * inv_det
        W_out[i, 0, 0] = w00
        W_out[i, 0, 1] = w01
        W_out[i, 0, 2] = w02
        W_out[i, 1, 0] = w01
        W_out[i, 1, 1] = w11
        W_out[i, 1, 2] = w12
        W_out[i, 2, 0] = w02
        W_out[i, 2, 1] = w12
        W_out[i, 2, 2] = w22

        # J = [R [p]_x, -R]
        J[0, 0] = R[0, 1] * pz - R[0, 2] * py
        J[1, 0] = R[1, 1] * pz - R[1, 2] * py
        J[2, 0] = R[2, 1] * pz - R[2, 2] * py
        J[0, 1] = R[0, 2] * px - R[0, 0] * pz
        J[1, 1] = R[1, 2] * px - R[1, 0] * pz
        J[2, 1] = R[2, 2] * px - R[2, 0] * pz
        J[0, 2] = R[0, 0] * py - R[0, 1] * px
        J[1, 2] = R[1, 0] * py - R[1, 1] * px
        J[2, 2] = R[2, 0] * py - R[2, 1] * px
        for k in range(3):
            J[0, 3 + k] = -R[0, k]
            J[1, 3 + k] = -R[1, k]
            J[2, 3 + k] = -R[2, k]

        # Wr, r^T W r, H += J^T W J, g += J^T W r
        wr0 = w00 * r0 + w01 * r1 + w02 * r2
        wr1 = w01 * r0 + w11 * r1 + w12 * r2
        wr2 = w02 * r0 + w12 * r1 + w22 * r2
        err += r0 * wr0 + r1 * wr1 + r2 * wr2
        for a_ in range(6):
            j0, j1, j2 = J[0, a_], J[1, a_], J[2, a_]
            wj0 = w00 * j0 + w01 * j1 + w02 * j2
            wj1 = w01 * j0 + w11 * j1 + w12 * j2
            wj2 = w02 * j0 + w12 * j1 + w22 * j2
            g[a_] += j0 * wr0 + j1 * wr1 + j2 * wr2
            for b_ in range(a_, 6):
                H[a_, b_] += J[0, b_] * wj0 + J[1, b_] * wj1 + J[2, b_] * wj2
    for a_ in range(6):
        for b_ in range(a_ + 1, 6):
            H[b_, a_] = H[a_, b_]
    return err


@njit(cache=True)
def _weighted_error(src, tgt, W, R, t):
    err = 0.0
    for i in range(src.shape[0]):
        px, py, pz = src[i, 0], src[i, 1], src[i, 2]
        r0 = tgt[i, 0] - (R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz + t[0])
        r1 = tgt[i, 1] - (R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz + t[1])
        r2 = tgt[i, 2] - (R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz + t[2])
        wr0 = W[i, 0, 0] * r0 + W[i, 0, 1] * r1 + W[i, 0, 2] * r2
        wr1 = W[i, 1, 0] * r0 + W[i, 1, 1] * r1 + W[i, 1, 2] * r2
        wr2 = W[i, 2, 0] * r0 + W[i, 2, 1] * r1 + W[i, 2, 2] * r2
        err += r0 * wr0 + r1 * wr1 + r2 * wr2
    return err


def _gauss_newton(
    source_pts: np.ndarray,
    target_pts: np.ndarray,
    target_tree: cKDTree,
    cov_s: np.ndarray,
    cov_t: np.ndarray,
    init: SE3Transform,
    max_dist: float = MAX_CORRESPONDENCE_DIST,
    trace: list | None = None,
) -> SE3Transform:
    X = init
    workers = _workers()
    source_pts = np.ascontiguousarray(source_pts)
    best_err = np.inf
    stall = 0
    for _ in range(MAX_ITERATIONS):
        moved = source_pts @ X.rotation.T + X.translation
        dist, nn = target_tree.query(moved, distance_upper_bound=max_dist, workers=workers)
        valid = np.isfinite(dist)
        if valid.sum() < MIN_CORRESPONDENCES:
            raise RegistrationError(
                f"only {int(valid.sum())} correspondences within {max_dist} m"
            )
        src = np.ascontiguousarray(source_pts[valid])
        tgt = np.ascontiguousarray(target_pts[nn[valid]])
        cs = np.ascontiguousarray(cov_s[valid])
        ct = np.ascontiguousarray(cov_t[nn[valid]])

        H = np.zeros((6, 6))
        g = np.zeros(6)
        W = np.empty((len(src), 3, 3))
        err0 = _gn_accumulate(src, tgt, cs, ct, X.rotation, X.translation, H, g, W)
        try:
            xi = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            xi = np.linalg.lstsq(H, -g, rcond=None)[0]

        step = 1.0
        accepted = None
        errc = err0
        for _ in range(12):
            cand = X.compose(se3_exp(step * xi))
            errc = _weighted_error(src, tgt, W, cand.rotation, cand.translation)
            if errc <= err0:
                accepted = cand
                break
            step *= 0.5
        if trace is not None:
            trace.append((err0, errc if accepted is not None else err0))
        if accepted is None:
            break  # no descent direction left; treat as converged
        X = accepted
        if np.linalg.norm(step * xi) < CONVERGENCE_TOL:
            break
        # Noisy scans have no exact minimum: the solver ends up cycling
        # between correspondence sets inside the noise floor. Track the best
        # cost seen and stop once it stops improving.
        if errc < best_err * (1.0 - 1e-6):
            best_err = errc
            stall = 0
        else:
            stall += 1
            if stall >= 3:
                break
    return X


def register_scan_to_scan(
    source: PointCloud3D,
    target: PointCloud3D,
    k_neighbors: int = 10,
    cov_s: np.ndarray = None,
    cov_t: np.ndarray = None,
    target_tree: cKDTree = None,
    init: SE3Transform = None,
    trace: list | None = None,
) -> SE3Transform:
    """Relative transform mapping source points into the target frame.

    Starts from the identity (or `init`), alternating nearest-neighbor
    correspondence (reject beyond 1.0 m) with damped Gauss-Newton steps
    until the update norm drops below 1e-6 or 64 iterations pass.
    Precomputed covariances / KD-tree may be passed to amortize per-frame
    work across calls.
    """
    if len(source) == 0 or len(target) == 0:
        raise RegistrationError("cannot register empty clouds")
    if cov_s is None:
        cov_s = estimate_covariances(source, k_neighbors)
    if cov_t is None:
        cov_t = estimate_covariances(target, k_neighbors)
    if target_tree is None:
        target_tree = cKDTree(target.points)
    if init is None:
        init = SE3Transform.identity()
    return _gauss_newton(
        source.points, target.points, target_tree, cov_s, cov_t, init, trace=trace
    )


@dataclass
class Keyframe:
    pose: SE3Transform
    cloud: PointCloud3D  # sensor frame


@dataclass
class Submap:
    """Aggregate of nearby keyframes used as the scan-to-submap target."""

    keyframes: list[Keyframe] = field(default_factory=list)
    voxel_resolution: float = 0.25
    max_keyframes_used: int = 10
    k_neighbors: int = 10
    cloud: PointCloud3D = None         # world frame, downsampled
    covariances: np.ndarray = None
    tree: cKDTree = None

    def __len__(self) -> int:
        return len(self.keyframes)

    def rebuild(self, around: SE3Transform) -> None:
        """Refresh the aggregate cloud from the keyframes nearest `around`."""
        if not self.keyframes:
            self.cloud = None
            self.covariances = None
            self.tree = None
            return
        centers = np.array([kf.pose.translation for kf in self.keyframes])
        d = np.linalg.norm(centers - around.translation, axis=1)
        order = np.argsort(d)[: self.max_keyframes_used]
        parts = [self.keyframes[i].pose.apply(self.keyframes[i].cloud.points) for i in order]
        merged = PointCloud3D(np.vstack(parts))
        merged = voxel_downsample(merged, self.voxel_resolution)
        self.cloud = merged
        if len(merged) >= self.k_neighbors:
            self.covariances = estimate_covariances(merged, self.k_neighbors)
            self.tree = cKDTree(merged.points)
        else:
            self.covariances = None
            self.tree = None


def maybe_add_keyframe(
    submap: Submap,
    pose: SE3Transform,
    cloud: PointCloud3D,
    translation_threshold: float = 1.0,
    yaw_threshold: float = np.deg2rad(30.0),
) -> bool:
    """Add (pose, cloud) as a keyframe when it is far enough from all others.

    A keyframe is added when the translation to the nearest existing
    keyframe reaches translation_threshold, or the relative rotation to that
    keyframe reaches yaw_threshold. The aggregate cloud is rebuilt from the
    nearest keyframes on every addition. Returns True when added.
    """
    if not submap.keyframes:
        submap.keyframes.append(Keyframe(pose, cloud))
        submap.rebuild(pose)
        return True
    centers = np.array([kf.pose.translation for kf in submap.keyframes])
    d = np.linalg.norm(centers - pose.translation, axis=1)
    nearest = int(np.argmin(d))
    rel = submap.keyframes[nearest].pose.inverse().compose(pose)
    if d[nearest] >= translation_threshold or rotation_angle(rel.rotation) >= yaw_threshold:
        submap.keyframes.append(Keyframe(pose, cloud))
        submap.rebuild(pose)
        return True
    return False


def register_scan_to_submap(
    source: PointCloud3D,
    submap: Submap,
    init: SE3Transform,
    cov_s: np.ndarray = None,
    trace: list | None = None,
) -> SE3Transform:
    """World-frame pose of `source` against the submap, warm-started at init."""
    if submap.cloud is None or len(submap.cloud) == 0 or submap.covariances is None:
        raise RegistrationError("submap is empty or degenerate")
    if cov_s is None:
        cov_s = estimate_covariances(source, submap.k_neighbors)
    return _gauss_newton(
        source.points,
        submap.cloud.points,
        submap.tree,
        cov_s,
        submap.covariances,
        init,
        trace=trace,
    )


__all__ = [
    "COV_EPSILON",
    "DegenerateCloudError",
    "Keyframe",
    "RegistrationError",
    "Submap",
    "estimate_covariances",
    "gicp_residual",
    "maybe_add_keyframe",
    "register_scan_to_scan",
    "register_scan_to_submap",
    "se3_to_pose2d",
]
