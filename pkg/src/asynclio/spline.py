"""Pose interpolation layers over the propagated knot buffer.

SplineTrajectory evaluates a cumulative cubic B-spline over four consecutive
knot poses: T(s) = T_{k-1} * exp(b1(s) O_k) * exp(b2(s) O_{k+1})
* exp(b3(s) O_{k+2}), where O_j is the incremental twist between knots j-1
and j and the cumulative basis is
    b1(s) = (5 + 3s - 3s^2 + s^3) / 6
    b2(s) = (1 + 3s + 3s^2 - 2s^3) / 6
    b3(s) = s^3 / 6.
The covariance attached to a query inside [t_k, t_{k+1}) is the one
propagated to the right knot, held constant over the interval.

RawTrajectory answers the same queries by partial zero-order-hold
propagation from the left knot (no smoothing); the pipeline switches between
the two per ablation mode.

Queries beyond the buffered window raise OutOfWindowError: the caller is
expected to feed more IMU before interpolating, never to extrapolate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import Pose3, se3_exp_batch, se3_log, se3_log_batch
from .uncertainty import PoseWithCov, clip_psd


class OutOfWindowError(ValueError):
    """Raised when a query time is not covered by buffered control points."""


def cumulative_basis(s):
    """Cumulative cubic basis values (b1, b2, b3) for phase s in [0, 1)."""
    s = np.asarray(s, dtype=float)
    s2 = s * s
    s3 = s2 * s
    b1 = (5.0 + 3.0 * s - 3.0 * s2 + s3) / 6.0
    b2 = (1.0 + 3.0 * s + 3.0 * s2 - 2.0 * s3) / 6.0
    b3 = s3 / 6.0
    return b1, b2, b3


def incremental_pose(T_a: Pose3, T_b: Pose3) -> np.ndarray:
    """Incremental control twist log(T_a^-1 T_b)."""
    return se3_log(T_a.inverse() @ T_b)


@dataclass
class ControlWindow:
    """Four consecutive control poses spanning one interpolation interval."""

    poses: list[PoseWithCov]
    knot_index: int
    knot_times: np.ndarray

    def __post_init__(self):
        self.knot_times = np.asarray(self.knot_times, dtype=float)
        if len(self.poses) != 4 or self.knot_times.shape != (4,):
            raise ValueError("a control window holds exactly four knots")
        gaps = np.diff(self.knot_times)
        if np.any(gaps <= 0):
            raise ValueError("knot times must be strictly increasing")
        if np.any(np.abs(gaps - gaps[0]) > 1e-9 * gaps[0]):
            raise ValueError("knot spacing must be uniform")


def interpolate(window: ControlWindow, t: float) -> PoseWithCov:
    """Interpolated pose at t inside the window's central interval.

    The covariance is the window's right-knot covariance, constant over the
    interval.
    """
    t0, t1 = window.knot_times[1], window.knot_times[2]
    if not (t0 <= t < t1):
        raise OutOfWindowError(f"query {t} outside [{t0}, {t1})")
    s = (t - t0) / (t1 - t0)
    b1, b2, b3 = cumulative_basis(s)
    omegas = np.stack(
        [
            incremental_pose(window.poses[0].pose, window.poses[1].pose),
            incremental_pose(window.poses[1].pose, window.poses[2].pose),
            incremental_pose(window.poses[2].pose, window.poses[3].pose),
        ]
    )
    scaled = omegas * np.array([b1, b2, b3])[:, None]
    R_inc, t_inc = se3_exp_batch(scaled)
    pose = window.poses[0].pose
    for i in range(3):
        pose = pose @ Pose3(R_inc[i], t_inc[i])
    return PoseWithCov(pose, window.poses[2].cov.copy())


class _TrajectoryBase:
    """Shared query helpers for the two interpolation backends."""

    def pose_at(self, t: float) -> Pose3:
        R, tr = self.poses_at_batch(np.array([t]))
        return Pose3(R[0], tr[0])

    def relative_pose(self, t_a: float, t_b: float) -> Pose3:
        R, tr = self.poses_at_batch(np.array([t_a, t_b]))
        return Pose3(R[0], tr[0]).inverse() @ Pose3(R[1], tr[1])

    def relative_with_cov(self, t_a: float, t_b: float) -> PoseWithCov:
        """Relative transform with the covariance accrued between the times.

        The accrued part is the PSD projection of the difference between the
        covariances assigned to the later and earlier query, so the transfer
        ambiguity grows with the time gap, consistent with propagation.
        """
        pose = self.relative_pose(t_a, t_b)
        lo, hi = (t_a, t_b) if t_a <= t_b else (t_b, t_a)
        cov = clip_psd(self.cov_at(hi) - self.cov_at(lo))
        return PoseWithCov(pose, cov)


class SplineTrajectory(_TrajectoryBase):
    """Cumulative B-spline over the propagator's knot buffer.

    A virtual control point is prepended by constant-velocity backward
    extrapolation so queries inside the first real interval have a full
    window.
    """

    def __init__(self, propagator):
        self._prop = propagator
        self.refresh()

    def refresh(self) -> None:
        """Rebuild cached arrays from the propagator's current buffer."""
        prop = self._prop
        times = np.asarray(prop.knot_times, dtype=float)
        rots = np.stack([s.rot for s in prop.knot_states])
        trans = np.stack([s.trans for s in prop.knot_states])
        covs = np.stack([c[:6, :6] for c in prop.knot_covs])

        if len(times) >= 2:
            dt = times[1] - times[0]
            v0 = prop.knot_states[0].vel
            pre_t = trans[0] - v0 * dt
            times = np.concatenate([[times[0] - dt], times])
            rots = np.concatenate([rots[:1], rots])
            trans = np.concatenate([pre_t[None], trans])
            covs = np.concatenate([covs[:1], covs])

        self.times = times
        self.rots = rots
        self.trans = trans
        self.covs = covs
        n = len(times)
        if n >= 2:
            rel_R = np.einsum("nji,njk->nik", rots[:-1], rots[1:])
            rel_t = np.einsum("nji,nj->ni", rots[:-1], trans[1:] - trans[:-1])
            self.omegas = se3_log_batch(rel_R, rel_t)
        else:
            self.omegas = np.zeros((0, 6))

    @property
    def t_min(self) -> float:
        return self.times[1] if len(self.times) > 1 else np.inf

    @property
    def t_max(self) -> float:
        """Exclusive upper bound of interpolable time."""
        return self.times[-2] if len(self.times) > 2 else -np.inf

    def covers(self, t: float) -> bool:
        return len(self.times) >= 4 and self.t_min <= t < self.t_max

    def _knot_indices(self, times: np.ndarray) -> np.ndarray:
        if times.size == 0:
            return np.zeros(0, dtype=int)
        if times.min() < self.t_min - 1e-12 or times.max() >= self.t_max:
            raise OutOfWindowError(
                f"queries [{times.min()}, {times.max()}] outside "
                f"[{self.t_min}, {self.t_max})"
            )
        idx = np.searchsorted(self.times, times, side="right") - 1
        return np.clip(idx, 1, len(self.times) - 3)

    def poses_at_batch(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        k = self._knot_indices(times)
        if times.size == 0:
            return np.zeros((0, 3, 3)), np.zeros((0, 3))
        dt = self.times[k + 1] - self.times[k]
        s = (times - self.times[k]) / dt
        b1, b2, b3 = cumulative_basis(s)

        # omegas[j] is the increment from knot j-1 to knot j.
        R_acc = self.rots[k - 1]
        t_acc = self.trans[k - 1]
        for b, oidx in ((b1, k - 1), (b2, k), (b3, k + 1)):
            R_inc, t_inc = se3_exp_batch(self.omegas[oidx] * b[:, None])
            t_acc = np.einsum("nij,nj->ni", R_acc, t_inc) + t_acc
            R_acc = R_acc @ R_inc
        return R_acc, t_acc

    def cov_at(self, t: float) -> np.ndarray:
        k = self._knot_indices(np.array([t]))[0]
        return self.covs[k + 1]

    def window_at(self, t: float) -> ControlWindow:
        """Materialize the four-knot window covering t (used by tests/tools)."""
        k = self._knot_indices(np.array([t]))[0]
        poses = [
            PoseWithCov(Pose3(self.rots[i], self.trans[i]), self.covs[i])
            for i in range(k - 1, k + 3)
        ]
        return ControlWindow(poses, k, self.times[k - 1 : k + 3])


class RawTrajectory(_TrajectoryBase):
    """Piecewise discrete propagation queries (no spline smoothing)."""

    def __init__(self, propagator):
        self._prop = propagator

    def refresh(self) -> None:
        pass

    @property
    def t_min(self) -> float:
        return self._prop.knot_times[0]

    @property
    def t_max(self) -> float:
        return self._prop.knot_times[-1]

    def covers(self, t: float) -> bool:
        return self.t_min <= t < self.t_max

    def poses_at_batch(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._prop.poses_at_batch(np.asarray(times, dtype=float))

    def cov_at(self, t: float) -> np.ndarray:
        return self._prop.cov_assigned(t)[:6, :6]
