"""Trajectory accuracy metrics: rigid-aligned ATE and distance-based RTE."""

from __future__ import annotations

import numpy as np

from .lie import quat_to_rot, rot_to_quat


def load_tum(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a TUM trajectory: times, rotations (n,3,3), positions (n,3)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 8:
        raise ValueError("TUM format requires 8 columns: t x y z qx qy qz qw")
    times = data[:, 0]
    pos = data[:, 1:4]
    rots = np.stack([quat_to_rot(q) for q in data[:, 4:8]])
    return times, rots, pos


def save_tum(path, times, rots, pos) -> None:
    with open(path, "w") as f:
        for t, R, p in zip(times, rots, pos):
            q = rot_to_quat(R)
            f.write(
                f"{t:.9f} {p[0]:.9f} {p[1]:.9f} {p[2]:.9f} "
                f"{q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}\n"
            )


def associate(t_est: np.ndarray, t_ref: np.ndarray, tol: float | None = None):
    """Nearest-time association; default tolerance is half the median est gap."""
    if tol is None:
        gaps = np.diff(t_est)
        tol = 0.5 * float(np.median(gaps)) if len(gaps) else 0.02
    idx_ref = np.searchsorted(t_ref, t_est)
    pairs = []
    for i, t in enumerate(t_est):
        cands = [j for j in (idx_ref[i] - 1, idx_ref[i]) if 0 <= j < len(t_ref)]
        if not cands:
            continue
        j = min(cands, key=lambda j: abs(t_ref[j] - t))
        if abs(t_ref[j] - t) <= tol:
            pairs.append((i, j))
    if len(pairs) < 2:
        raise ValueError("trajectories have no usable temporal overlap")
    return np.array(pairs, dtype=int)


def umeyama_rigid(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form rigid transform (no scale) minimizing |R src + t - dst|^2."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (dst - mu_d).T @ (src - mu_s)
    U, _, Vt = np.linalg.svd(H)
    S = np.eye(3)
    if np.linalg.det(U @ Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return R, mu_d - R @ mu_s


def rotation_angle_deg(R: np.ndarray) -> float:
    cos = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))


def ate(
    est: tuple[np.ndarray, np.ndarray, np.ndarray],
    truth: tuple[np.ndarray, np.ndarray, np.ndarray],
    tol: float | None = None,
) -> tuple[float, float]:
    """Absolute trajectory error after rigid alignment: (meters, degrees)."""
    t_e, R_e, p_e = est
    t_t, R_t, p_t = truth
    pairs = associate(t_e, t_t, tol)
    pe = p_e[pairs[:, 0]]
    pt = p_t[pairs[:, 1]]
    R_align, t_align = umeyama_rigid(pe, pt)
    res = pe @ R_align.T + t_align - pt
    ate_t = float(np.sqrt(np.mean(np.sum(res**2, axis=1))))
    ang = [
        rotation_angle_deg(R_t[j].T @ R_align @ R_e[i]) for i, j in pairs
    ]
    ate_r = float(np.sqrt(np.mean(np.square(ang))))
    return ate_t, ate_r


def rte(
    est: tuple[np.ndarray, np.ndarray, np.ndarray],
    truth: tuple[np.ndarray, np.ndarray, np.ndarray],
    delta: float = 2.0,
    tol: float | None = None,
) -> tuple[float, float]:
    """Relative error over truth arcs of length delta: (%, deg/m)."""
    t_e, R_e, p_e = est
    t_t, R_t, p_t = truth
    pairs = associate(t_e, t_t, tol)
    pe, pt = p_e[pairs[:, 0]], p_t[pairs[:, 1]]
    Re = R_e[pairs[:, 0]]
    Rt = R_t[pairs[:, 1]]
    seg = np.linalg.norm(np.diff(pt, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])

    errs_t, errs_r = [], []
    j = 0
    for i in range(len(arc)):
        while j < len(arc) and arc[j] - arc[i] < delta:
            j += 1
        if j >= len(arc):
            break
        rel_t_truth = Rt[i].T @ (pt[j] - pt[i])
        rel_R_truth = Rt[i].T @ Rt[j]
        rel_t_est = Re[i].T @ (pe[j] - pe[i])
        rel_R_est = Re[i].T @ Re[j]
        dt_err = rel_t_est - rel_t_truth
        dR_err = rel_R_truth.T @ rel_R_est
        errs_t.append(np.linalg.norm(dt_err) / delta * 100.0)
        errs_r.append(rotation_angle_deg(dR_err) / delta)
    if not errs_t:
        raise ValueError(f"trajectory shorter than delta={delta} m")
    rte_t = float(np.sqrt(np.mean(np.square(errs_t))))
    rte_r = float(np.sqrt(np.mean(np.square(errs_r))))
    return rte_t, rte_r
