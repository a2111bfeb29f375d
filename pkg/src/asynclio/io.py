"""Dataset file formats: IMU/scan CSV, binary scan records, manifest, TUM.

Scan files hold one point per row (t, x, y, z) in the sensor frame; a
dataset manifest declares per-LiDAR files, rates, phases, and extrinsic
initial guesses, plus the IMU stream and the ground-truth trajectory. The
binary scan variant stores the same columns as little-endian float64
records.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .lie import Pose3, rot_to_quat, so3_exp
from .scans import LidarScan


def write_imu_csv(path, times, gyro, accel) -> None:
    data = np.column_stack([times, gyro, accel])
    np.savetxt(path, data, fmt="%.9f", delimiter=",", header="t,wx,wy,wz,ax,ay,az", comments="")


def read_imu_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:4], data[:, 4:7]


def write_scan_csv(path, scans: list[LidarScan]) -> None:
    rows = [np.column_stack([s.times, s.points]) for s in scans if len(s)]
    data = np.vstack(rows) if rows else np.zeros((0, 4))
    np.savetxt(path, data, fmt="%.9f", delimiter=",", header="t,x,y,z", comments="")


def write_scan_bin(path, scans: list[LidarScan]) -> None:
    rows = [np.column_stack([s.times, s.points]) for s in scans if len(s)]
    data = np.vstack(rows) if rows else np.zeros((0, 4))
    data.astype("<f8").tofile(path)


def read_scan_points(path) -> tuple[np.ndarray, np.ndarray]:
    """Raw rows of a per-LiDAR file (CSV or binary by extension)."""
    path = Path(path)
    if path.suffix == ".bin":
        data = np.fromfile(path, dtype="<f8").reshape(-1, 4)
    else:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        return np.zeros(0), np.zeros((0, 3))
    return data[:, 0], data[:, 1:4]


def split_scans(times, points, lidar_id: int, rate: float, phase: float) -> list[LidarScan]:
    """Chunk a point stream back into sweeps using the scan period."""
    if len(times) == 0:
        return []
    period = 1.0 / rate
    idx = np.floor((times - phase) / period + 1e-9).astype(int)
    scans = []
    for k in np.unique(idx):
        sel = idx == k
        scans.append(LidarScan(lidar_id, times[sel], points[sel]))
    return scans


def extrinsic_from_manifest(entry: dict) -> Pose3:
    return Pose3(so3_exp(np.asarray(entry["rotvec"], dtype=float)),
                 np.asarray(entry["trans"], dtype=float))


def write_manifest(path, scenario, lidar_files: dict[int, str], imu_file: str,
                   truth_file: str) -> dict:
    traj = scenario.build()[0]
    R0, p0 = traj.rotation(0.0), traj.position(0.0)
    manifest = {
        "name": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "gravity": [0.0, 0.0, -9.81],
        "imu": {
            "file": imu_file,
            "rate": scenario.imu.rate,
            "gyro_noise": scenario.imu.gyro_noise,
            "accel_noise": scenario.imu.accel_noise,
            "gyro_bias_walk": scenario.imu.gyro_bias_walk,
            "accel_bias_walk": scenario.imu.accel_bias_walk,
        },
        "lidars": [
            {
                "id": rig.lidar_id,
                "file": lidar_files[rig.lidar_id],
                "rate": rig.rate,
                "phase": rig.phase,
                "pattern": rig.pattern,
                "extrinsic": {
                    "rotvec": list(rig.extrinsic_rotvec),
                    "trans": list(rig.extrinsic_trans),
                },
                "fov": {
                    "max_range": rig.max_range,
                    "h_fov_deg": rig.h_fov_deg,
                    "v_fov_deg": rig.v_fov_deg,
                },
                "range_noise": rig.range_noise,
            }
            for rig in scenario.lidars
        ],
        "truth": truth_file,
        "init": {
            "position": [float(v) for v in p0],
            "quat": [float(v) for v in rot_to_quat(R0)],
            "velocity": [float(v) for v in traj.velocity(0.0)],
        },
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def read_manifest(path) -> dict:
    with open(path) as f:
        return json.load(f)


def write_dataset(scenario, out_dir, binary: bool = False) -> Path:
    """Synthesize and write the full dataset; returns the manifest path."""
    from . import sim
    from .evaluate import save_tum

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    times, gyro, accel = sim.synth_imu(scenario)
    write_imu_csv(out / "imu.csv", times, gyro, accel)

    scan_streams = sim.synth_scans(scenario)
    lidar_files = {}
    for lid, scans in scan_streams.items():
        fname = f"lidar_{lid}.bin" if binary else f"lidar_{lid}.csv"
        (write_scan_bin if binary else write_scan_csv)(out / fname, scans)
        lidar_files[lid] = fname

    t_truth, R_truth, p_truth = sim.truth_poses(scenario)
    save_tum(out / "truth.tum", t_truth, R_truth, p_truth)

    write_manifest(out / "manifest.json", scenario, lidar_files, "imu.csv", "truth.tum")
    return out / "manifest.json"
