"""Filter state on the pose/velocity/bias/gravity/extrinsics manifold.

The error-state vector stacks, in order: body rotation (3), body translation
(3), velocity (3), gyro bias (3), accel bias (3), gravity (3), then one
(rotation, translation) pair per LiDAR extrinsic. Dimension is 18 + 6N.
Rotation blocks retract by right multiplication with the SO(3) exponential;
vector blocks add.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lie import Pose3, so3_exp, so3_log

# Block offsets into the error-state vector.
ROT = slice(0, 3)
TRANS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
GRAV = slice(15, 18)
BASE_DIM = 18


def ext_rot_slice(i: int) -> slice:
    return slice(BASE_DIM + 6 * i, BASE_DIM + 6 * i + 3)


def ext_trans_slice(i: int) -> slice:
    return slice(BASE_DIM + 6 * i + 3, BASE_DIM + 6 * i + 6)


@dataclass
class FilterState:
    """Body pose, velocity, IMU biases, gravity, and per-LiDAR extrinsics."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    extrinsics: list[Pose3] = field(default_factory=list)

    def __post_init__(self):
        self.rot = np.asarray(self.rot, dtype=float)
        self.trans = np.asarray(self.trans, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        self.bias_gyro = np.asarray(self.bias_gyro, dtype=float)
        self.bias_accel = np.asarray(self.bias_accel, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)

    @property
    def num_lidars(self) -> int:
        return len(self.extrinsics)

    @property
    def dim(self) -> int:
        return BASE_DIM + 6 * self.num_lidars

    @property
    def pose(self) -> Pose3:
        return Pose3(self.rot, self.trans)

    def copy(self) -> "FilterState":
        return FilterState(
            self.rot.copy(),
            self.trans.copy(),
            self.vel.copy(),
            self.bias_gyro.copy(),
            self.bias_accel.copy(),
            self.gravity.copy(),
            [e.copy() for e in self.extrinsics],
        )


def boxplus(x: FilterState, delta: np.ndarray) -> FilterState:
    """Retract a tangent vector onto the state manifold."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (x.dim,):
        raise ValueError(f"tangent dimension {delta.shape} != ({x.dim},)")
    out = x.copy()
    out.rot = x.rot @ so3_exp(delta[ROT])
    out.trans = x.trans + delta[TRANS]
    out.vel = x.vel + delta[VEL]
    out.bias_gyro = x.bias_gyro + delta[BG]
    out.bias_accel = x.bias_accel + delta[BA]
    out.gravity = x.gravity + delta[GRAV]
    for i, ext in enumerate(x.extrinsics):
        out.extrinsics[i] = Pose3(
            ext.rot @ so3_exp(delta[ext_rot_slice(i)]),
            ext.trans + delta[ext_trans_slice(i)],
        )
    return out


def boxminus(a: FilterState, b: FilterState) -> np.ndarray:
    """Tangent vector from b to a; exact inverse of boxplus."""
    if a.num_lidars != b.num_lidars:
        raise ValueError("states have different LiDAR counts")
    delta = np.zeros(a.dim)
    delta[ROT] = so3_log(b.rot.T @ a.rot)
    delta[TRANS] = a.trans - b.trans
    delta[VEL] = a.vel - b.vel
    delta[BG] = a.bias_gyro - b.bias_gyro
    delta[BA] = a.bias_accel - b.bias_accel
    delta[GRAV] = a.gravity - b.gravity
    for i in range(a.num_lidars):
        delta[ext_rot_slice(i)] = so3_log(b.extrinsics[i].rot.T @ a.extrinsics[i].rot)
        delta[ext_trans_slice(i)] = a.extrinsics[i].trans - b.extrinsics[i].trans
    return delta


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)
