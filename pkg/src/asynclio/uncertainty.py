"""Pose-covariance algebra and first-order point uncertainty propagation.

A PoseWithCov pairs a rigid transform with a 6x6 covariance of its
world-side (left) perturbation, the convention under which the inverse
covariance is the adjoint-of-inverse sandwich and pose compounding follows
the fourth-order series of the associated-uncertainty literature. Twist
ordering is [rotation; translation] throughout; the compounding series is
evaluated in translation-first block order internally and permuted back.

Point uncertainty: for q = T p the first-order covariance is
Sigma_p = J Xi J^T with J = [dq/dxi | dq/dzeta], Xi = diag(Sigma_T, Z);
the homogeneous row is identically zero and is never stored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import Pose3, adjoint, point_jacobian, skew_batch
from .state import symmetrize

# Permutation between [rot; trans] and [trans; rot] twist block orders.
_PERM = np.zeros((6, 6))
_PERM[:3, 3:] = np.eye(3)
_PERM[3:, :3] = np.eye(3)


@dataclass
class PoseWithCov:
    """Rigid transform with the covariance of its tangent-space perturbation."""

    pose: Pose3
    cov: np.ndarray

    def __post_init__(self):
        self.cov = np.asarray(self.cov, dtype=float)

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))


@dataclass
class PointWithCov:
    """3D point with propagated positional covariance and source metadata."""

    xyz: np.ndarray
    cov: np.ndarray
    lidar_id: int = 0
    t: float = 0.0

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))


def clip_psd(M: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone (eigenvalue clamp)."""
    sym = symmetrize(np.asarray(M, dtype=float))
    w, V = np.linalg.eigh(sym)
    if w[0] >= 0.0:
        return sym
    return (V * np.maximum(w, 0.0)) @ V.T


def invert_with_cov(p: PoseWithCov) -> PoseWithCov:
    """Inverse transform with covariance mapped by the adjoint of the inverse."""
    inv = p.pose.inverse()
    ad = adjoint(inv)
    return PoseWithCov(inv, symmetrize(ad @ p.cov @ ad.T))


def _op1(A: np.ndarray) -> np.ndarray:
    return -np.trace(A) * np.eye(3) + A


def _op2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return _op1(A) @ _op1(B) + _op1(B @ A)


def _series_A(cov_tr: np.ndarray) -> np.ndarray:
    # cov_tr is in [trans; rot] block order.
    s_pp = cov_tr[:3, :3]
    s_pf = cov_tr[:3, 3:]
    s_ff = cov_tr[3:, 3:]
    A = np.zeros((6, 6))
    A[:3, :3] = _op1(s_ff)
    A[:3, 3:] = _op1(s_pf + s_pf.T)
    A[3:, 3:] = _op1(s_ff)
    return A


def _series_B(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    # Both inputs in [trans; rot] block order.
    s1_pp, s1_pf, s1_ff = c1[:3, :3], c1[:3, 3:], c1[3:, 3:]
    s2_pp, s2_pf, s2_ff = c2[:3, :3], c2[:3, 3:], c2[3:, 3:]
    B = np.zeros((6, 6))
    B_pp = (
        _op2(s1_ff, s2_pp)
        + _op2(s1_pf.T, s2_pf)
        + _op2(s1_pf, s2_pf.T)
        + _op2(s1_pp, s2_ff)
    )
    B_pf = _op2(s1_ff, s2_pf.T) + _op2(s1_pf.T, s2_ff)
    B_ff = _op2(s1_ff, s2_ff)
    B[:3, :3] = B_pp
    B[:3, 3:] = B_pf
    B[3:, :3] = B_pf.T
    B[3:, 3:] = B_ff
    return B


def compound(a: PoseWithCov, b: PoseWithCov, fourth_order: bool = True) -> PoseWithCov:
    """Compose two independent uncertain transforms with fourth-order terms."""
    pose = a.pose @ b.pose
    ad = adjoint(a.pose)
    b_lifted = ad @ b.cov @ ad.T
    cov = a.cov + b_lifted
    if fourth_order:
        c1 = _PERM @ a.cov @ _PERM.T
        c2 = _PERM @ b_lifted @ _PERM.T
        A1 = _series_A(c1)
        A2 = _series_A(c2)
        extra = (A1 @ c2 + c2 @ A1.T + A2 @ c1 + c1 @ A2.T) / 12.0 + _series_B(c1, c2) / 4.0
        cov = cov + _PERM @ extra @ _PERM.T
    return PoseWithCov(pose, symmetrize(cov))


def acquisition_uncertainty(
    inv_extrinsic_p: PoseWithCov,
    relative: PoseWithCov,
    extrinsic_s: PoseWithCov,
) -> PoseWithCov:
    """Uncertainty of the cross-sensor, cross-time point transfer chain.

    Compounds the inverted target extrinsic, the interpolated relative body
    transform, and the source extrinsic; its covariance trace summarizes how
    ambiguous the transfer is.
    """
    return compound(compound(inv_extrinsic_p, relative), extrinsic_s)


def point_covariance(
    T: PoseWithCov, p: np.ndarray, Z: np.ndarray, lidar_id: int = 0, t: float = 0.0
) -> PointWithCov:
    """First-order covariance of a transformed point under transform and
    measurement noise."""
    p = np.asarray(p, dtype=float)
    q = T.pose.apply(p)
    J = point_jacobian(q)
    cov = J @ T.cov @ J.T + T.pose.rot @ np.asarray(Z, dtype=float) @ T.pose.rot.T
    return PointWithCov(q, symmetrize(cov), lidar_id, t)


def point_cov_given_q(
    q: np.ndarray, cov6: np.ndarray, rot: np.ndarray, Z: np.ndarray
) -> np.ndarray:
    """Covariances (n, 3, 3) of already-transformed points q under one
    transform covariance and measurement noise Z rotated by the transform."""
    A = -skew_batch(q)
    s_rr = cov6[:3, :3]
    s_rt = cov6[:3, 3:]
    s_tt = cov6[3:, 3:]
    meas = rot @ np.asarray(Z, dtype=float) @ rot.T
    cross = A @ s_rt
    cov = A @ s_rr @ np.transpose(A, (0, 2, 1)) + cross + np.transpose(cross, (0, 2, 1))
    cov = cov + s_tt[None] + meas[None]
    return 0.5 * (cov + np.transpose(cov, (0, 2, 1)))


def point_covariance_batch(
    rot: np.ndarray,
    trans: np.ndarray,
    cov6: np.ndarray,
    points: np.ndarray,
    Z: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized point_covariance for one transform over (n, 3) points.

    Returns transformed points (n, 3) and covariances (n, 3, 3).
    """
    q = points @ rot.T + trans
    return q, point_cov_given_q(q, cov6, rot, Z)


def rotate_point_cov(R: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Rotate (n, 3, 3) point covariances into another frame."""
    return np.einsum("ij,njk,lk->nil", R, covs, R)
