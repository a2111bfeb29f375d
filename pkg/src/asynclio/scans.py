"""Multi-LiDAR preprocessing: scan-set selection, undistortion, and merge.

A frame is assembled by picking one pending scan per LiDAR so that arrival
times cluster (minimum pairwise spread), undistorting every scan to its own
latest-point time, then expressing everything in the frame of the LiDAR with
the latest arrival (the reference P) at that arrival time. Original
per-point coordinates and timestamps ride along for the downstream
uncertainty chain.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .lie import Pose3

log = logging.getLogger(__name__)


@dataclass
class LidarScan:
    """One sweep of one LiDAR: time-ordered points in the sensor frame."""

    lidar_id: int
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if len(self.times) and np.any(np.diff(self.times) < 0):
            raise ValueError("scan points must be time-ordered")

    @property
    def arrival(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class MergedFrame:
    """All selected scans expressed in the reference LiDAR frame at t_ref.

    raw/undistorted coordinates stay in each point's source-sensor frame;
    merged coordinates are in the reference frame. temporals[i] is the body
    transform from LiDAR i's reference time to the frame time.
    """

    ref_lidar: int
    t_ref: float
    lidar_ids: np.ndarray
    times: np.ndarray
    raw: np.ndarray
    undistorted: np.ndarray
    merged: np.ndarray
    arrivals: dict[int, float]
    temporals: dict[int, Pose3]

    def __len__(self) -> int:
        return len(self.times)


def pairwise_spread(arrivals) -> float:
    """Sum of pairwise absolute arrival-time differences."""
    total = 0.0
    for a, b in itertools.combinations(arrivals, 2):
        total += abs(a - b)
    return total


def select_scan_set(queues: list[list[LidarScan]]) -> tuple[list[int], int]:
    """Pick one scan per queue minimizing the arrival-time spread.

    Returns (per-queue scan indices, reference LiDAR position). Exhaustive
    over the bounded queues, which the selection property tests pin against.
    """
    if any(len(q) == 0 for q in queues):
        raise ValueError("scan set not ready: a queue is empty")
    best = None
    best_combo = None
    for combo in itertools.product(*(range(len(q)) for q in queues)):
        arrivals = [queues[i][j].arrival for i, j in enumerate(combo)]
        spread = pairwise_spread(arrivals)
        if best is None or spread < best:
            best = spread
            best_combo = combo
    arrivals = [queues[i][j].arrival for i, j in enumerate(best_combo)]
    ref = int(np.argmax(arrivals))
    return list(best_combo), ref


class ScanQueues:
    """Bounded per-LiDAR scan queues with oldest-drop overflow."""

    def __init__(self, n_lidars: int, max_depth: int = 8):
        self.queues: list[list[LidarScan]] = [[] for _ in range(n_lidars)]
        self.max_depth = max_depth

    def push(self, scan: LidarScan) -> None:
        q = self.queues[scan.lidar_id]
        q.append(scan)
        if len(q) > self.max_depth:
            dropped = q.pop(0)
            log.warning(
                "lidar %d queue overflow: dropping scan arriving at %.4f",
                scan.lidar_id,
                dropped.arrival,
            )

    def ready(self) -> bool:
        return all(self.queues)

    def drop_stale(self, t: float) -> None:
        """Discard scans that arrived before an already-processed frame time."""
        for q in self.queues:
            while q and q[0].arrival <= t:
                log.warning(
                    "dropping stale scan (lidar %d, arrival %.4f <= %.4f)",
                    q[0].lidar_id,
                    q[0].arrival,
                    t,
                )
                q.pop(0)

    def select(self) -> tuple[list[LidarScan], int] | None:
        """Consume and return the best-aligned scan set, or None if not ready."""
        if not self.ready():
            return None
        combo, ref = select_scan_set(self.queues)
        picked = [self.queues[i].pop(j) for i, j in enumerate(combo)]
        return picked, ref


def undistort(scan: LidarScan, traj, extrinsic: Pose3) -> np.ndarray:
    """Express every point in the sensor frame at the scan's arrival time.

    p_u = T_IS^-1 * B(t_l)^-1 B(t_j) * T_IS * p for each point time t_j,
    with B the interpolated body pose.
    """
    t_l = scan.arrival
    R_j, t_j = traj.poses_at_batch(scan.times)
    ref = traj.pose_at(t_l)
    rel_R = np.einsum("ji,njk->nik", ref.rot, R_j)
    rel_t = np.einsum("ji,nj->ni", ref.rot, t_j - ref.trans)

    Rs, ts = extrinsic.rot, extrinsic.trans
    in_body = scan.points @ Rs.T + ts
    moved = np.einsum("nij,nj->ni", rel_R, in_body) + rel_t
    return (moved - ts) @ Rs


def merge(
    scans: list[LidarScan],
    undistorted: list[np.ndarray],
    traj,
    extrinsics: list[Pose3],
    ref_pos: int,
) -> MergedFrame:
    """Bring undistorted scans into the reference LiDAR frame at its arrival.

    For the reference LiDAR itself the temporal term is exactly identity.
    """
    ref_scan = scans[ref_pos]
    t_i = ref_scan.arrival
    pose_i = traj.pose_at(t_i)
    ext_p = extrinsics[ref_scan.lidar_id]

    ids, times, raw, undist, merged = [], [], [], [], []
    arrivals: dict[int, float] = {}
    temporals: dict[int, Pose3] = {}
    for scan, p_u in zip(scans, undistorted):
        t_l = scan.arrival
        arrivals[scan.lidar_id] = t_l
        if scan is ref_scan:
            temporal = Pose3.identity()
        else:
            pose_l = traj.pose_at(t_l)
            temporal = pose_i.inverse() @ pose_l
        temporals[scan.lidar_id] = temporal
        chain = ext_p.inverse() @ temporal @ extrinsics[scan.lidar_id]
        merged.append(p_u @ chain.rot.T + chain.trans)
        undist.append(p_u)
        raw.append(scan.points)
        times.append(scan.times)
        ids.append(np.full(len(scan), scan.lidar_id, dtype=np.int64))

    return MergedFrame(
        ref_lidar=ref_scan.lidar_id,
        t_ref=t_i,
        lidar_ids=np.concatenate(ids),
        times=np.concatenate(times),
        raw=np.concatenate(raw),
        undistorted=np.concatenate(undist),
        merged=np.concatenate(merged),
        arrivals=arrivals,
        temporals=temporals,
    )


def voxel_downsample_indices(points: np.ndarray, voxel: float) -> np.ndarray:
    """Indices of the first point in each occupied voxel (deterministic)."""
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)
