"""SE(3) algebra, pinhole projection and pose-error metrics.

Conventions
-----------
* A :class:`Pose` maps points from the source frame into the target frame,
  ``p_target = R @ p_source + t``.  For extrinsics ``T_LC`` the source is the
  LiDAR and the target is the camera.
* Twists are ordered ``(rho, phi)``: translation first, then axis-angle.
* Increments are applied on the left: ``T_new = exp(xi) @ T``.
* Pixel ``(u, v)`` covers the continuous square ``[u, u+1) x [v, v+1)``;
  a pixel is visible when ``0 <= u < width`` and ``0 <= v < height``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NearPiRotation, OutOfView

Z_MIN = 1e-3  # meters; anything closer to the camera plane is out of view
_SMALL_ANGLE = 1e-8
_ORTHO_TOL = 1e-9
_NEAR_PI = math.pi - 1e-6


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def hat(w) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(w) @ v == cross(w, v)``."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S) -> np.ndarray:
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_drift(R) -> float:
    """Largest entry-wise deviation of ``R^T R`` from identity, plus ``|det R - 1|``."""
    R = np.asarray(R)
    return max(float(np.max(np.abs(R.T @ R - np.eye(3)))), abs(float(np.linalg.det(R)) - 1.0))


@dataclass(frozen=True)
class Pose:
    """Rigid transform; immutable."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation).reshape(-1)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"bad pose shapes {R.shape}, {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite entries")
        if rotation_drift(R) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, M) -> "Pose":
        M = np.asarray(M, dtype=np.float64)
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


class Twist(NamedTuple):
    rho: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=np.float64)
        return cls(xi[:3].copy(), xi[3:6].copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.rho, float), np.asarray(self.phi, float)])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


class Pixel(NamedTuple):
    u: float
    v: float


def _as_vector(xi) -> np.ndarray:
    if isinstance(xi, Twist):
        return xi.vector()
    return np.asarray(xi, dtype=np.float64).reshape(6)


_SERIES_ANGLE = 1e-2


def _one_minus_cos_over_sq(theta: float) -> float:
    # half-angle form avoids cancellation in 1 - cos for small theta
    h = math.sin(0.5 * theta) / theta
    return 2.0 * h * h


def _theta_minus_sin_over_cube(theta: float) -> float:
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    return (theta - math.sin(theta)) / theta**3


def _log_v_coefficient(theta: float) -> float:
    """Coefficient of ``hat(phi)^2`` in the inverse left Jacobian of SO(3)."""
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    half = 0.5 * theta
    return (1.0 - half / math.tan(half)) / theta**2


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (math.sin(theta) / theta) * K + _one_minus_cos_over_sq(theta) * (K @ K)


def rotation_angle(R) -> float:
    """Geodesic angle of a rotation matrix in radians, in ``[0, pi]``."""
    R = np.asarray(R)
    # atan2 form stays accurate near 0 and pi where arccos loses digits
    s = 0.5 * float(np.linalg.norm(vee(R - R.T)))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    return math.atan2(s, c)


def se3_exp(xi) -> Pose:
    """Exponential map from a twist ``(rho, phi)`` to a pose."""
    v = _as_vector(xi)
    rho, phi = v[:3], v[3:]
    theta = float(np.linalg.norm(phi))
    K = hat(phi)
    K2 = K @ K
    if theta < _SMALL_ANGLE:
        R = np.eye(3) + K + 0.5 * K2
        V = np.eye(3) + 0.5 * K + K2 / 6.0
    else:
        b = _one_minus_cos_over_sq(theta)
        R = np.eye(3) + (math.sin(theta) / theta) * K + b * K2
        V = np.eye(3) + b * K + _theta_minus_sin_over_cube(theta) * K2
    return Pose(R, V @ rho)


def se3_log(T: Pose) -> Twist:
    """Inverse of :func:`se3_exp` for rotations with angle below ``pi - 1e-6``."""
    R = T.rotation
    theta = rotation_angle(R)
    if theta >= _NEAR_PI:
        raise NearPiRotation(f"rotation angle {theta!r} too close to pi")
    if theta < _SMALL_ANGLE:
        phi = 0.5 * vee(R - R.T)
        K = hat(phi)
        V_inv = np.eye(3) - 0.5 * K + (K @ K) / 12.0
    else:
        phi = (theta / (2.0 * math.sin(theta))) * vee(R - R.T)
        K = hat(phi)
        V_inv = np.eye(3) - 0.5 * K + _log_v_coefficient(theta) * (K @ K)
    return Twist(V_inv @ T.translation, phi)


def compose(A: Pose, B: Pose) -> Pose:
    """``A @ B``: apply ``B`` first, then ``A``."""
    R = A.rotation @ B.rotation
    if rotation_drift(R) > _ORTHO_TOL:
        R = orthonormalize(R)
    return Pose(R, A.rotation @ B.translation + A.translation)


def inverse(T: Pose) -> Pose:
    Rt = T.rotation.T
    return Pose(Rt, -Rt @ T.translation)


def transform_point(T: Pose, p) -> np.ndarray:
    return T.rotation @ np.asarray(p, dtype=np.float64) + T.translation


def transform_points(T: Pose, P) -> np.ndarray:
    """Vectorized :func:`transform_point` over an ``(n, 3)`` array."""
    return np.asarray(P, dtype=np.float64) @ T.rotation.T + T.translation


def project(K: CameraIntrinsics, p_cam) -> Pixel:
    """Pinhole projection of a camera-frame point; raises :class:`OutOfView` for ``z <= Z_MIN``."""
    x, y, z = (float(c) for c in p_cam)
    if not z > Z_MIN:
        raise OutOfView(f"point depth {z} <= {Z_MIN}")
    return Pixel(K.fx * x / z + K.cx, K.fy * y / z + K.cy)


def project_points(K: CameraIntrinsics, P_cam) -> tuple[np.ndarray, np.ndarray]:
    """Project ``(n, 3)`` camera-frame points.

    Returns ``(uv, ok)`` where ``ok`` marks points in front of the camera.
    Rows with ``ok == False`` hold NaN.
    """
    P = np.asarray(P_cam, dtype=np.float64).reshape(-1, 3)
    z = P[:, 2]
    ok = z > Z_MIN
    uv = np.full((len(P), 2), np.nan)
    zs = z[ok]
    uv[ok, 0] = K.fx * P[ok, 0] / zs + K.cx
    uv[ok, 1] = K.fy * P[ok, 1] / zs + K.cy
    return uv, ok


def in_image(K: CameraIntrinsics, uv) -> np.ndarray | bool:
    """Visibility predicate ``0 <= u < width and 0 <= v < height``."""
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[..., 0], uv[..., 1]
    with np.errstate(invalid="ignore"):
        return (u >= 0) & (u < K.width) & (v >= 0) & (v < K.height)


def visible(K: CameraIntrinsics, P_cam) -> tuple[np.ndarray, np.ndarray]:
    """Project and apply both the depth cutoff and the image bounds."""
    uv, ok = project_points(K, P_cam)
    return uv, ok & in_image(K, uv)


def project_jacobians(K: CameraIntrinsics, P_cam) -> np.ndarray:
    """Jacobians ``d pi(exp(xi) p) / d xi`` at ``xi = 0`` for camera-frame points.

    Returns an ``(n, 2, 6)`` array; columns are ``(rho_x, rho_y, rho_z, phi_x, phi_y, phi_z)``.
    """
    P = np.asarray(P_cam, dtype=np.float64).reshape(-1, 3)
    x, y, z = P[:, 0], P[:, 1], P[:, 2]
    iz = 1.0 / z
    iz2 = iz * iz
    J = np.empty((len(P), 2, 6))
    # d pi / d p  times  [I | -hat(p)]
    J[:, 0, 0] = K.fx * iz
    J[:, 0, 1] = 0.0
    J[:, 0, 2] = -K.fx * x * iz2
    J[:, 0, 3] = -K.fx * x * y * iz2
    J[:, 0, 4] = K.fx * (1.0 + x * x * iz2)
    J[:, 0, 5] = -K.fx * y * iz
    J[:, 1, 0] = 0.0
    J[:, 1, 1] = K.fy * iz
    J[:, 1, 2] = -K.fy * y * iz2
    J[:, 1, 3] = -K.fy * (1.0 + y * y * iz2)
    J[:, 1, 4] = K.fy * x * y * iz2
    J[:, 1, 5] = K.fy * x * iz
    return J


def project_jacobian(K: CameraIntrinsics, T: Pose, p) -> np.ndarray:
    """2x6 Jacobian of ``project(K, exp(xi) T p)`` with respect to ``xi`` at zero."""
    pc = transform_point(T, p)
    if not pc[2] > Z_MIN:
        raise OutOfView(f"point depth {pc[2]} <= {Z_MIN}")
    return project_jacobians(K, pc[None, :])[0]


def pose_error(A: Pose, B: Pose) -> tuple[float, float]:
    """``(translation error in meters, geodesic rotation error in degrees)``."""
    dt = float(np.linalg.norm(A.translation - B.translation))
    dr = math.degrees(rotation_angle(A.rotation @ B.rotation.T))
    return dt, dr
