"""3D geometry: rigid transforms, pinhole cameras, stereo depth and registration.

All quantities are float64 numpy arrays in meters and radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegenerateDisparity,
    NonPositiveDepth,
    ParallelRays,
    ShapeMismatch,
)

_ORTHO_TOL = 1e-9


def rot_z(theta: float) -> np.ndarray:
    """Rotation matrix about +z by ``theta`` radians."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues' formula for a rotation of ``angle`` about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def wrap_angle(theta):
    """Wrap angles to the half-open interval (-pi, pi]."""
    wrapped = np.mod(-np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi)
    out = np.pi - wrapped
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion ``p -> R p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("rigid transform must be finite")
        if (np.abs(R @ R.T - np.eye(3)).max() > _ORTHO_TOL
                or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL):
            raise ValueError("rotation must be orthonormal with det +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        M = np.asarray(matrix, dtype=float)
        if M.shape != (4, 4):
            raise ShapeMismatch(f"expected 4x4 matrix, got {M.shape}")
        if np.abs(M[3] - [0.0, 0.0, 0.0, 1.0]).max() > _ORTHO_TOL:
            raise ValueError("last row of a rigid transform must be [0, 0, 0, 1]")
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def about_z(cls, theta: float) -> "RigidTransform":
        return cls(rot_z(theta), np.zeros(3))

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        # (self @ other)(p) == self(other(p))
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        return transform_points(self, points)


@dataclass(frozen=True)
class PinholeCamera:
    """Pinhole intrinsics plus the camera-to-reference pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")


@dataclass(frozen=True)
class StereoRig:
    """A rectified stereo pair; depth is expressed in the left camera frame."""

    left: PinholeCamera
    right: PinholeCamera
    baseline: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")
        l, r = self.left, self.right
        if (l.fx, l.fy, l.cy) != (r.fx, r.fy, r.cy):
            raise ValueError("stereo pair must be rectified (same fx, fy and cy)")

    @classmethod
    def rectified(cls, fx, fy, cx, cy, baseline, pose=None) -> "StereoRig":
        """Build a rig whose right camera sits ``baseline`` along the left camera's +x."""
        pose = RigidTransform() if pose is None else pose
        left = PinholeCamera(fx, fy, cx, cy, pose)
        right_pose = pose @ RigidTransform(np.eye(3), [baseline, 0.0, 0.0])
        right = PinholeCamera(fx, fy, cx, cy, right_pose)
        return cls(left, right, baseline)


def disparity_to_depth(f: float, B: float, d, epsilon_d: float = 1e-6):
    """Depth from stereo disparity, ``Z = f * B / d``.

    Works elementwise on arrays. Raises :class:`DegenerateDisparity` if any
    disparity is at or below ``epsilon_d`` pixels.
    """
    if not (f > 0 and B > 0):
        raise ValueError("focal length and baseline must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(~(d > epsilon_d)):
        raise DegenerateDisparity(f"disparity must exceed {epsilon_d} px")
    Z = f * B / d
    return float(Z) if Z.ndim == 0 else Z


def depth_to_disparity(f: float, B: float, Z):
    """Rendering direction of :func:`disparity_to_depth`, ``d = f * B / Z``."""
    Z = np.asarray(Z, dtype=float)
    if np.any(~(Z > 0)):
        raise NonPositiveDepth("depth must be positive")
    d = f * B / Z
    return float(d) if d.ndim == 0 else d


def unproject(camera: PinholeCamera, pixel, depth) -> np.ndarray:
    """Back-project pixel(s) at the given depth into the camera frame.

    ``pixel`` may be shape (2,) or (M, 2) with ``depth`` scalar or (M,).
    """
    px = np.asarray(pixel, dtype=float)
    Z = np.asarray(depth, dtype=float)
    if np.any(~(Z > 0)):
        raise NonPositiveDepth("depth must be positive")
    u, v = px[..., 0], px[..., 1]
    X = (u - camera.cx) * Z / camera.fx
    Y = (v - camera.cy) * Z / camera.fy
    return np.stack(np.broadcast_arrays(X, Y, Z), axis=-1)


def project(camera: PinholeCamera, points_cam) -> np.ndarray:
    """Pinhole projection of camera-frame points to pixels."""
    P = np.asarray(points_cam, dtype=float)
    Z = P[..., 2]
    if np.any(~(Z > 0)):
        raise NonPositiveDepth("points must lie in front of the camera")
    u = camera.fx * P[..., 0] / Z + camera.cx
    v = camera.fy * P[..., 1] / Z + camera.cy
    return np.stack([u, v], axis=-1)


def project_reference(camera: PinholeCamera, points_ref) -> np.ndarray:
    """Project reference-frame points through a posed camera."""
    return project(camera, transform_points(camera.pose.inverse(), points_ref))


def transform_points(T: RigidTransform, points) -> np.ndarray:
    """Apply ``p -> R p + t`` to each row of an (..., 3) array."""
    P = np.asarray(points, dtype=float)
    if P.shape[-1] != 3:
        raise ShapeMismatch(f"points must have trailing dimension 3, got {P.shape}")
    return P @ T.rotation.T + T.translation


def kabsch(P, Q) -> RigidTransform:
    """Least-squares rigid transform taking rows of ``P`` onto rows of ``Q``.

    Minimises ``sum_i |R P_i + t - Q_i|^2`` over proper rotations using the
    SVD of the cross-covariance, with the sign of the last singular direction
    flipped when needed so the result is never a reflection.

    Raises
    ------
    DegenerateConfiguration
        If ``P`` has fewer than 3 rows or its centred points are collinear,
        which leaves the rotation underdetermined.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise ShapeMismatch(f"P and Q must both be Mx3, got {P.shape} and {Q.shape}")
    if P.shape[0] < 3:
        raise DegenerateConfiguration("need at least 3 correspondences")

    cP = P.mean(axis=0)
    cQ = Q.mean(axis=0)
    Pc = P - cP
    Qc = Q - cQ
    sv = np.linalg.svd(Pc, compute_uv=False)
    if sv[0] < 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateConfiguration("source points are collinear or coincident")

    H = Pc.T @ Qc
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = Vt.T @ D @ U.T
    # polish tiny drift so the RigidTransform invariant check never trips
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    t = cQ - R @ cP
    return RigidTransform(R, t)


def extract_z_rotation(T) -> tuple[float, RigidTransform]:
    """Planar rotation about +z closest (Frobenius) to the rotation of ``T``.

    Accepts a :class:`RigidTransform` or a bare 3x3 matrix. Returns the angle
    in (-pi, pi] and the pure z-rotation with zero translation.
    """
    R = T.rotation if isinstance(T, RigidTransform) else np.asarray(T, dtype=float)
    s = R[1, 0] - R[0, 1]
    c = R[0, 0] + R[1, 1]
    if abs(s) < 1e-12 and abs(c) < 1e-12:
        raise DegenerateConfiguration("rotation axis is orthogonal to z; yaw undefined")
    theta = wrap_angle(np.arctan2(s, c))
    return theta, RigidTransform.about_z(theta)


def pixel_ray(camera: PinholeCamera, pixel) -> tuple[np.ndarray, np.ndarray]:
    """Origin and (unnormalised) direction of a pixel's ray in the reference frame."""
    u, v = np.asarray(pixel, dtype=float)
    d_cam = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return camera.pose.translation.copy(), camera.pose.rotation @ d_cam


def triangulate(camA: PinholeCamera, camB: PinholeCamera, pixA, pixB) -> np.ndarray:
    """Midpoint of the common perpendicular between two back-projected rays."""
    oA, dA = pixel_ray(camA, pixA)
    oB, dB = pixel_ray(camB, pixB)
    if np.linalg.norm(oA - oB) < 1e-12:
        raise ParallelRays("cameras share an optical centre; depth is unobservable")
    cross = np.linalg.norm(np.cross(dA, dB)) / (np.linalg.norm(dA) * np.linalg.norm(dB))
    if cross < 1e-9:
        raise ParallelRays("ray directions are parallel")
    w0 = oA - oB
    a, b, c = dA @ dA, dA @ dB, dB @ dB
    d, e = dA @ w0, dB @ w0
    denom = a * c - b * b
    s = (b * e - c * d) / denom
    t = (a * e - b * d) / denom
    return 0.5 * ((oA + s * dA) + (oB + t * dB))
