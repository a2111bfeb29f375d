"""Point-to-plane measurement construction with uncertainty weighting.

Residual for a point p (undistorted, in its source LiDAR frame):

    h = v^T (T_GI * B * T_IL * p - q) / c

where v, q are the local plane's unit normal and anchor, B is the frame-level
temporal compensation transform of the point's LiDAR, and c is the
interval-rescaled trace of the neighborhood's weighted covariance. The same
rescaling machinery produces the per-residual measurement noise and the
frame-level localization weight, each bounded to its configured interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import Pose3, skew
from .state import ROT, TRANS, FilterState, ext_rot_slice, ext_trans_slice


@dataclass
class WeightParams:
    """Bounded-rescaling intervals and the map-gating threshold tau."""

    scale_min: float = 1.0
    scale_max: float = 1.25
    noise_min: float = 0.0075
    noise_max: float = 0.0125
    weight_min: float = 0.5
    weight_max: float = 3.0
    band_min: float = 0.2
    band_max: float = 0.8
    tau: float = 1.0

    def __post_init__(self):
        pairs = [
            (self.scale_min, self.scale_max),
            (self.noise_min, self.noise_max),
            (self.weight_min, self.weight_max),
            (self.band_min, self.band_max),
        ]
        if any(lo >= hi for lo, hi in pairs) or self.tau <= 0:
            raise ValueError("weight intervals require min < max and tau > 0")


def interval_rescale(v, v_min: float, v_max: float, out_max: float, out_min: float):
    """Affine map of v from [v_min, v_max] onto [out_min, out_max].

    A degenerate input range maps to the interval midpoint. Accepts scalars
    or arrays.
    """
    if v_max - v_min <= 0.0:
        mid = 0.5 * (out_max + out_min)
        return mid if np.isscalar(v) else np.full(np.shape(v), mid)
    return (out_max - out_min) * (np.asarray(v) - v_min) / (v_max - v_min) + out_min


def fit_plane(points: np.ndarray, d_plane: float = 0.1):
    """Least-squares plane through a small neighborhood.

    Returns (normal, anchor, ok); ok is False when the neighborhood is
    rank-deficient or any point sits farther than d_plane from the plane.
    """
    pts = np.asarray(points, dtype=float)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] < 1e-9:
        return np.zeros(3), centroid, False
    normal = vt[2]
    dists = centered @ normal
    return normal, centroid, bool(np.abs(dists).max() < d_plane)


def fit_planes_batch(neighborhoods: np.ndarray, d_plane: float = 0.1):
    """Vectorized fit_plane over (n, k, 3) neighborhoods.

    Also returns the per-fit RMS off-plane distance, which callers can use
    as a flatness statistic (surface-crossing neighborhoods sit far above
    the sensor-noise floor).
    """
    k = neighborhoods.shape[1]
    centroids = neighborhoods.mean(axis=1)
    centered = neighborhoods - centroids[:, None, :]
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    normals = vt[:, 2, :]
    dists = np.einsum("nkj,nj->nk", centered, normals)
    ok = (s[:, 1] > 1e-9) & (np.abs(dists).max(axis=1) < d_plane)
    rms = s[:, 2] / np.sqrt(k)
    return normals, centroids, ok, rms


def plane_covariance(neighbor_covs, tau: float):
    """Trace-weighted covariance of a plane neighborhood.

    Weights are proportional to the gating headroom tau - tr(cov); any
    neighbor at or beyond tau indicates a map-gating violation.
    """
    covs = np.asarray(neighbor_covs, dtype=float)
    traces = np.trace(covs, axis1=1, axis2=2)
    if np.any(traces >= tau):
        raise ValueError("neighbor trace at or above tau: map gating violated")
    head = tau - traces
    w = head / head.sum()
    return np.einsum("n,nij->ij", w**2, covs), w


def plane_covariance_batch(neighbor_covs: np.ndarray, tau: float):
    """plane_covariance over (n, k, 3, 3) stacks; returns (n,3,3) and (n,k)."""
    traces = np.trace(neighbor_covs, axis1=2, axis2=3)
    if np.any(traces >= tau):
        raise ValueError("neighbor trace at or above tau: map gating violated")
    head = tau - traces
    w = head / head.sum(axis=1, keepdims=True)
    covs = np.einsum("nk,nkij->nij", w**2, neighbor_covs)
    return covs, w


@dataclass
class Residual:
    """One scalar point-to-plane measurement: value, Jacobian row, noise."""

    z: float
    H: np.ndarray
    R: float


def residual_row(
    x: FilterState,
    lidar_idx: int,
    temporal: Pose3,
    p_u: np.ndarray,
    normal: np.ndarray,
    anchor: np.ndarray,
    scale: float,
) -> tuple[float, np.ndarray]:
    """Scaled residual and its Jacobian row over all state blocks."""
    ext = x.extrinsics[lidar_idx]
    mid = temporal.apply(ext.apply(np.asarray(p_u, dtype=float)))
    p_world = x.rot @ mid + x.trans
    z = float(normal @ (p_world - anchor)) / scale

    H = np.zeros(x.dim)
    v_scaled = normal / scale
    H[ROT] = -v_scaled @ x.rot @ skew(mid)
    H[TRANS] = v_scaled
    R_gb = x.rot @ temporal.rot
    H[ext_rot_slice(lidar_idx)] = -v_scaled @ R_gb @ ext.rot @ skew(p_u)
    H[ext_trans_slice(lidar_idx)] = v_scaled @ R_gb
    return z, H


def residual_rows_batch(
    x: FilterState,
    lidar_idx: np.ndarray,
    temporals: list[Pose3],
    p_u: np.ndarray,
    normals: np.ndarray,
    anchors: np.ndarray,
    scales: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized residual_row; one temporal transform per LiDAR index."""
    n = len(p_u)
    dim = x.dim
    z = np.empty(n)
    H = np.zeros((n, dim))
    for li in np.unique(lidar_idx):
        sel = lidar_idx == li
        ext = x.extrinsics[li]
        B = temporals[li]
        pu = p_u[sel]
        mid = (pu @ ext.rot.T + ext.trans) @ B.rot.T + B.trans
        p_world = mid @ x.rot.T + x.trans
        v = normals[sel] / scales[sel, None]
        z[sel] = np.einsum("nj,nj->n", normals[sel], p_world - anchors[sel]) / scales[sel]
        vR = v @ x.rot
        H[sel, ROT] = np.cross(mid, vR)  # -v R skew(mid) = cross(mid, vR)
        H[sel, TRANS] = v
        R_gb = x.rot @ B.rot
        vRgb = v @ R_gb
        H[sel, ext_rot_slice(li)] = np.cross(pu, vRgb @ ext.rot)
        H[sel, ext_trans_slice(li)] = vRgb
    return z, H


def localization_weight(normals: np.ndarray, params: WeightParams) -> float:
    """Frame-level measurement confidence from the plane-normal spread.

    The smallest-to-largest singular value ratio of the stacked normals
    measures how well the scene constrains all directions; it is clamped to
    the configured band and rescaled onto the weight interval. Degenerate
    scenes therefore weaken the measurement side of the update.
    """
    normals = np.asarray(normals, dtype=float)
    if len(normals) < 3:
        return params.weight_min
    s = np.linalg.svd(normals, compute_uv=False)
    w = s[-1] / s[0] if s[0] > 0 else 0.0
    if w < params.band_min:
        return params.weight_min
    if w > params.band_max:
        return params.weight_max
    return float(
        interval_rescale(
            w, params.band_min, params.band_max, params.weight_max, params.weight_min
        )
    )
