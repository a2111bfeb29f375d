"""Discrete IMU propagation: mean, covariance, and the post-update buffer fix.

Between two scan updates the state is advanced sample-by-sample with a
zero-order hold on the IMU input. Each advanced sample becomes a knot of the
pose buffer that feeds interpolation. After a filter update the buffered
chain is made consistent with the optimized state by a single rigid
correction, which preserves all relative motion inside the buffer.

Noise handling: process noise enters as Q = diag(densities) * dt with the
noise Jacobian normalized accordingly, so F_w @ Q @ F_w^T carries the usual
continuous-to-discrete scaling.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .lie import skew, so3_exp, so3_exp_batch, so3_right_jacobian
from .state import BA, BG, GRAV, ROT, TRANS, VEL, FilterState, boxplus, symmetrize
from .uncertainty import PoseWithCov


@dataclass
class ImuSample:
    """One IMU reading: timestamp (s), angular rate (rad/s), specific force (m/s^2)."""

    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        self.gyro = np.asarray(self.gyro, dtype=float)
        self.accel = np.asarray(self.accel, dtype=float)


@dataclass
class NoiseParams:
    """Continuous-time IMU noise densities (all non-negative)."""

    gyro_noise: float = 0.01
    accel_noise: float = 0.1
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4

    def q_matrix(self, dt: float) -> np.ndarray:
        d = np.concatenate(
            [
                np.full(3, self.gyro_noise**2),
                np.full(3, self.accel_noise**2),
                np.full(3, self.gyro_bias_walk**2),
                np.full(3, self.accel_bias_walk**2),
            ]
        )
        return np.diag(d * dt)


def kinematics(x: FilterState, u: ImuSample, dt: float) -> np.ndarray:
    """State rate vector: rotation, translation, and velocity rows active.

    The translation row carries the half-step acceleration term so that
    dt * rate yields the trapezoidal position update; bias, gravity, and
    extrinsic rows are zero in the mean propagation.
    """
    rate = np.zeros(x.dim)
    acc_world = x.rot @ (u.accel - x.bias_accel) + x.gravity
    rate[ROT] = u.gyro - x.bias_gyro
    rate[TRANS] = x.vel + 0.5 * acc_world * dt
    rate[VEL] = acc_world
    return rate


def propagate_mean(x: FilterState, u: ImuSample, dt: float) -> FilterState:
    return boxplus(x, dt * kinematics(x, u, dt))


def propagation_jacobians(
    x: FilterState, u: ImuSample, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Error-state transition F_x (dim x dim) and noise Jacobian F_w (dim x 12).

    Derived for the right-perturbation error convention; every block is
    pinned against central finite differences in the test suite.
    """
    dim = x.dim
    w_dt = (u.gyro - x.bias_gyro) * dt
    a_hat = u.accel - x.bias_accel
    R = x.rot
    Jr = so3_right_jacobian(w_dt)

    F_x = np.eye(dim)
    F_x[ROT, ROT] = so3_exp(w_dt).T
    F_x[ROT, BG] = -Jr * dt
    F_x[TRANS, ROT] = -0.5 * dt * dt * R @ skew(a_hat)
    F_x[TRANS, VEL] = dt * np.eye(3)
    F_x[TRANS, BA] = -0.5 * dt * dt * R
    F_x[TRANS, GRAV] = 0.5 * dt * dt * np.eye(3)
    F_x[VEL, ROT] = -dt * R @ skew(a_hat)
    F_x[VEL, BA] = -dt * R
    F_x[VEL, GRAV] = dt * np.eye(3)

    F_w = np.zeros((dim, 12))
    F_w[ROT, 0:3] = -Jr
    F_w[TRANS, 3:6] = -0.5 * dt * R
    F_w[VEL, 3:6] = -R
    F_w[BG, 6:9] = np.eye(3)
    F_w[BA, 9:12] = np.eye(3)
    return F_x, F_w


def propagate(
    x: FilterState,
    cov: np.ndarray,
    u: ImuSample,
    dt: float,
    noise: NoiseParams,
) -> tuple[FilterState, np.ndarray]:
    """One discrete propagation step of mean and covariance."""
    if dt <= 0:
        raise ValueError("propagation step requires dt > 0")
    x_next = propagate_mean(x, u, dt)
    F_x, F_w = propagation_jacobians(x, u, dt)
    Q = noise.q_matrix(dt)
    cov_next = symmetrize(F_x @ cov @ F_x.T + F_w @ Q @ F_w.T)
    return x_next, cov_next


def recalc_pose_buffer(
    buffer: list[PoseWithCov], optimized: FilterState
) -> list[PoseWithCov]:
    """Rigidly correct a buffered pose chain onto the optimized update pose.

    The last buffer entry is taken as the pre-update propagated pose at the
    update time; the left-multiplied correction maps it onto the optimized
    pose while preserving every relative transform inside the buffer.
    """
    if not buffer:
        raise ValueError("pose buffer is empty")
    correction = optimized.pose @ buffer[-1].pose.inverse()
    return [PoseWithCov(correction @ p.pose, p.cov.copy()) for p in buffer]


class Propagator:
    """Sample-driven propagation producing the knot buffer for interpolation.

    Knots sit exactly on IMU sample timestamps. Queries between knots are
    answered by a partial zero-order-hold step from the left knot; the
    covariance assigned to a query time is the one propagated to the right
    knot of its interval.
    """

    def __init__(self, t0: float, x0: FilterState, cov0: np.ndarray, noise: NoiseParams):
        self.noise = noise
        self.t_cur = float(t0)
        self.x_cur = x0.copy()
        self.cov_cur = np.array(cov0, dtype=float)
        self.knot_times: list[float] = [float(t0)]
        self.knot_states: list[FilterState] = [x0.copy()]
        self.knot_covs: list[np.ndarray] = [self.cov_cur.copy()]
        self.knot_inputs: list[ImuSample | None] = [None]
        self._last_sample: ImuSample | None = None
        # Off-grid update anchor (t, state): queries at or after it inside its
        # knot interval propagate from the optimized state, so the chain is
        # exact at the update time.
        self._anchor: tuple[float, FilterState] | None = None

    @property
    def last_time(self) -> float:
        return self.knot_times[-1]

    def feed(self, sample: ImuSample) -> None:
        """Advance to the sample's timestamp and record a knot there."""
        if self._last_sample is None:
            # The first sample doubles as the hold input for any gap between
            # the anchor time and its own timestamp.
            self._last_sample = sample
            self.knot_inputs[0] = sample
            if sample.t <= self.t_cur + 1e-12:
                return
        elif sample.t <= self.t_cur:
            raise ValueError("IMU timestamps must be strictly increasing")
        dt = sample.t - self.t_cur
        self.x_cur, self.cov_cur = propagate(
            self.x_cur, self.cov_cur, self._last_sample, dt, self.noise
        )
        self.t_cur = sample.t
        self.knot_times.append(sample.t)
        self.knot_states.append(self.x_cur.copy())
        self.knot_covs.append(self.cov_cur.copy())
        self.knot_inputs.append(sample)
        self._last_sample = sample

    def _left_index(self, t: float) -> int:
        if t < self.knot_times[0] - 1e-12 or t > self.knot_times[-1] + 1e-12:
            raise ValueError(f"query time {t} outside propagated range")
        idx = bisect_right(self.knot_times, t) - 1
        return max(0, min(idx, len(self.knot_times) - 1))

    def _anchored_left(self, idx: int, t: float) -> tuple[float, FilterState]:
        """Start point for a partial step: the update anchor when it applies."""
        if (
            self._anchor is not None
            and t >= self._anchor[0] - 1e-12
            and self.knot_times[idx] <= self._anchor[0] + 1e-12
        ):
            return self._anchor
        return self.knot_times[idx], self.knot_states[idx]

    def state_at(self, t: float) -> FilterState:
        """Mean state at t via a partial step from the left knot (or anchor)."""
        idx = self._left_index(t)
        t0, x = self._anchored_left(idx, t)
        dt = t - t0
        if dt <= 1e-12:
            return x.copy()
        u = self.knot_inputs[idx]
        return propagate_mean(x, u, dt)

    def cov_assigned(self, t: float) -> np.ndarray:
        """Covariance assigned to time t: the right-knot covariance of its interval."""
        idx = self._left_index(t)
        if t > self.knot_times[idx] + 1e-12:
            if idx + 1 >= len(self.knot_covs):
                raise ValueError(f"no propagated covariance beyond {t}")
            idx += 1
        return self.knot_covs[idx]

    def poses_at_batch(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-propagated poses for many query times: (n,3,3), (n,3)."""
        times = np.asarray(times, dtype=float)
        kt = np.asarray(self.knot_times)
        if times.size and (times.min() < kt[0] - 1e-12 or times.max() > kt[-1] + 1e-12):
            raise ValueError("query times outside propagated range")
        idx = np.clip(np.searchsorted(kt, times, side="right") - 1, 0, len(kt) - 1)

        starts = [self._anchored_left(i, t) for i, t in zip(idx, times)]
        dt = times - np.array([s[0] for s in starts])
        origin = [s[1] for s in starts]
        R0 = np.stack([x.rot for x in origin])
        t0 = np.stack([x.trans for x in origin])
        v0 = np.stack([x.vel for x in origin])
        gyro = np.stack(
            [self.knot_inputs[i].gyro - x.bias_gyro for i, x in zip(idx, origin)]
        )
        acc = np.stack(
            [self.knot_inputs[i].accel - x.bias_accel for i, x in zip(idx, origin)]
        )
        grav = np.stack([x.gravity for x in origin])

        R = R0 @ so3_exp_batch(gyro * dt[:, None])
        a_world = np.einsum("nij,nj->ni", R0, acc) + grav
        trans = t0 + v0 * dt[:, None] + 0.5 * a_world * (dt * dt)[:, None]
        return R, trans

    def apply_correction(self, t: float, x_opt: FilterState, cov_opt: np.ndarray) -> None:
        """Re-anchor the chain on the optimized state at the update time.

        All knots are mapped by the rigid correction between the propagated
        and optimized pose at t; velocities rotate with it, and bias/gravity
        estimates are refreshed from the optimum.
        """
        x_prop = self.state_at(t)
        correction = x_opt.pose @ x_prop.pose.inverse()
        Rc, tc = correction.rot, correction.trans
        for xs in self.knot_states:
            xs.trans = Rc @ xs.trans + tc
            xs.rot = Rc @ xs.rot
            xs.vel = Rc @ xs.vel
        self.t_cur = float(t)
        self.x_cur = x_opt.copy()
        self.cov_cur = np.array(cov_opt, dtype=float)
        self._anchor = (float(t), x_opt.copy())

    def prune_before(self, t: float) -> None:
        """Drop knots strictly older than t, keeping at least two."""
        cut = 0
        while cut < len(self.knot_times) - 2 and self.knot_times[cut + 1] < t:
            cut += 1
        if cut:
            del self.knot_times[:cut]
            del self.knot_states[:cut]
            del self.knot_covs[:cut]
            del self.knot_inputs[:cut]

    def pose_buffer(self) -> list[PoseWithCov]:
        """Knot poses with their 6x6 pose-block covariances."""
        return [
            PoseWithCov(s.pose.copy(), c[:6, :6].copy())
            for s, c in zip(self.knot_states, self.knot_covs)
        ]
