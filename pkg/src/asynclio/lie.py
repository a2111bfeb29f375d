"""SO(3)/SE(3) primitives: exp/log maps, adjoints, and point linearization.

Conventions used across the package:
  - Rotations are 3x3 orthonormal matrices, twists are 6-vectors ordered
    [rotation (rad); translation (m)].
  - Rigid transforms map body/sensor coordinates into the parent frame:
    p_parent = R @ p + t.
  - State-space perturbations are right-sided: R_perturbed = R @ exp(delta^).

Batch variants operate on stacked arrays (leading axis) and are used by the
scan/spline hot paths; scalar variants are the reference implementations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Below this rotation angle the closed-form coefficients are replaced by
# second-order Taylor expansions to avoid cancellation.
SMALL_ANGLE = 1e-8

# se3_log / so3_log reject rotations closer to pi than this margin.
PI_MARGIN = 1e-6


def _check_finite(v: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")


def skew(v) -> np.ndarray:
    """Skew-symmetric (cross-product) matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def skew_batch(v: np.ndarray) -> np.ndarray:
    """Skew matrices for an (n, 3) array, returned as (n, 3, 3)."""
    n = v.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -v[:, 2]
    out[:, 0, 2] = v[:, 1]
    out[:, 1, 0] = v[:, 2]
    out[:, 1, 2] = -v[:, 0]
    out[:, 2, 0] = -v[:, 1]
    out[:, 2, 1] = v[:, 0]
    return out


def so3_exp(w) -> np.ndarray:
    """Rodrigues exponential so(3) -> SO(3) with small-angle fallback."""
    w = np.asarray(w, dtype=float)
    _check_finite(w, "rotation vector")
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_exp_batch(w: np.ndarray) -> np.ndarray:
    """Vectorized Rodrigues formula for (n, 3) rotation vectors."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w, axis=1)
    K = skew_batch(w)
    K2 = K @ K
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * K2


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; raises for angles within PI_MARGIN of pi."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta > np.pi - PI_MARGIN:
        raise ValueError("so3_log: rotation angle too close to pi")
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < SMALL_ANGLE:
        return v
    return (theta / np.sin(theta)) * v


def so3_log_batch(R: np.ndarray) -> np.ndarray:
    """Vectorized so3_log for (n, 3, 3); same pi-domain restriction."""
    tr = np.trace(R, axis1=1, axis2=2)
    cos_theta = np.clip((tr - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if np.any(theta > np.pi - PI_MARGIN):
        raise ValueError("so3_log_batch: rotation angle too close to pi")
    v = 0.5 * np.stack(
        [
            R[:, 2, 1] - R[:, 1, 2],
            R[:, 0, 2] - R[:, 2, 0],
            R[:, 1, 0] - R[:, 0, 1],
        ],
        axis=1,
    )
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    scale = np.where(small, 1.0, safe / np.sin(safe))
    return scale[:, None] * v


def so3_left_jacobian(w) -> np.ndarray:
    """Left Jacobian of SO(3): the V matrix coupling rotation to translation."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + (K @ K) / 6.0
    t2 = theta * theta
    a = (1.0 - np.cos(theta)) / t2
    b = (theta - np.sin(theta)) / (t2 * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_left_jacobian_inv(w) -> np.ndarray:
    """Closed-form inverse of the SO(3) left Jacobian."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    K = skew(w)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + (K @ K) / 12.0
    c = 1.0 / (theta * theta) - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * K + c * (K @ K)


def so3_right_jacobian(w) -> np.ndarray:
    """Right Jacobian: J_r(w) = J_l(-w)."""
    return so3_left_jacobian(-np.asarray(w, dtype=float))


def so3_right_jacobian_inv(w) -> np.ndarray:
    return so3_left_jacobian_inv(-np.asarray(w, dtype=float))


def _left_jacobian_batch(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w, axis=1)
    K = skew_batch(w)
    K2 = K @ K
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    t2 = safe * safe
    a = np.where(small, 0.5, (1.0 - np.cos(safe)) / t2)
    b = np.where(small, 1.0 / 6.0, (safe - np.sin(safe)) / (t2 * safe))
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * K2


def _left_jacobian_inv_batch(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w, axis=1)
    K = skew_batch(w)
    K2 = K @ K
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    c = np.where(
        small,
        1.0 / 12.0,
        1.0 / (safe * safe) - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)),
    )
    return np.eye(3)[None] - 0.5 * K + c[:, None, None] * K2


@dataclass
class Pose3:
    """Rigid transform: rotation matrix plus translation vector."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose3") -> "Pose3":
        return Pose3(self.rot @ other.rot, self.rot @ other.trans + self.trans)

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return self.compose(other)

    def inverse(self) -> "Pose3":
        rt = self.rot.T
        return Pose3(rt, -rt @ self.trans)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (3,) point or (n, 3) point array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self.rot @ pts + self.trans
        return pts @ self.rot.T + self.trans

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose3":
        return Pose3(np.array(m[:3, :3]), np.array(m[:3, 3]))

    def copy(self) -> "Pose3":
        return Pose3(self.rot.copy(), self.trans.copy())


def se3_exp(xi) -> Pose3:
    """Exponential of a twist [rot; trans] onto SE(3)."""
    xi = np.asarray(xi, dtype=float)
    _check_finite(xi, "twist")
    w, rho = xi[:3], xi[3:]
    return Pose3(so3_exp(w), so3_left_jacobian(w) @ rho)


def se3_log(T: Pose3) -> np.ndarray:
    """Twist of a rigid transform; domain excludes angles at pi."""
    w = so3_log(T.rot)
    rho = so3_left_jacobian_inv(w) @ T.trans
    return np.concatenate([w, rho])


def se3_exp_batch(xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch se3_exp: (n, 6) twists -> ((n, 3, 3) rotations, (n, 3) translations)."""
    w, rho = xi[:, :3], xi[:, 3:]
    R = so3_exp_batch(w)
    t = np.einsum("nij,nj->ni", _left_jacobian_batch(w), rho)
    return R, t


def se3_log_batch(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Batch se3_log for stacked transforms; returns (n, 6) twists."""
    w = so3_log_batch(R)
    rho = np.einsum("nij,nj->ni", _left_jacobian_inv_batch(w), t)
    return np.concatenate([w, rho], axis=1)


def adjoint(T: Pose3) -> np.ndarray:
    """6x6 adjoint of T in [rot; trans] twist ordering.

    Satisfies adjoint(T) @ xi = se3_log(T * se3_exp(xi) * T^-1) to first order.
    """
    out = np.zeros((6, 6))
    out[:3, :3] = T.rot
    out[3:, 3:] = T.rot
    out[3:, :3] = skew(T.trans) @ T.rot
    return out


def circdot(q) -> np.ndarray:
    """The 4x6 point operator of the first-order pose-point linearization.

    For homogeneous q = (eps; eta) the matrix is [[eta*I, -skew(eps)], [0, 0]]
    with columns ordered [translation; rotation]; it satisfies
    exp(xi^) q ~= q + circdot(q) @ xi for twists in that column order.
    """
    q = np.asarray(q, dtype=float)
    eps, eta = q[:3], q[3]
    out = np.zeros((4, 6))
    out[:3, :3] = eta * np.eye(3)
    out[:3, 3:] = -skew(eps)
    return out


def point_jacobian(p_transformed: np.ndarray) -> np.ndarray:
    """3x6 sensitivity of a transformed point to the transform's twist.

    Canonical [rot; trans] column order (the top rows of circdot, permuted);
    p_transformed is the already-transformed 3D point.
    """
    out = np.zeros((3, 6))
    out[:, :3] = -skew(p_transformed)
    out[:, 3:] = np.eye(3)
    return out


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    """Quaternion (x, y, z, w) from a rotation matrix (Shepperd's method)."""
    m = np.asarray(R, dtype=float)
    tr = np.trace(m)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    q = np.array([x, y, z, w])
    return q / np.linalg.norm(q)


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from quaternion (x, y, z, w)."""
    x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
