"""Frame-by-frame odometry: preprocessing, update, and mapping per scan set.

One code path serves all ablation modes; the mode only toggles which
interpolation backend answers pose queries and how per-point covariances and
residual weights are formed:

    RAW    piecewise discrete interpolation, uniform weights
    CNT    spline interpolation, uniform weights
    F-UNC  discrete interpolation, one frame-level covariance for all points
    UNC    discrete interpolation, per-point covariance + localization weight
    FULL   spline interpolation, per-point covariance + localization weight

Per-frame stage timings are recorded under the six fixed stage names.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .ieskf import Prior, iterate_update
from .imu import ImuSample, NoiseParams, Propagator
from .io import extrinsic_from_manifest, read_imu_csv, read_manifest, read_scan_points, split_scans
from .lie import Pose3, quat_to_rot
from .mapping import KdMap
from .planes import (
    fit_planes_batch,
    interval_rescale,
    localization_weight,
    plane_covariance_batch,
    residual_rows_batch,
)
from .scans import LidarScan, MergedFrame, ScanQueues, merge, undistort, voxel_downsample_indices
from .spline import RawTrajectory, SplineTrajectory
from .state import FilterState, ext_rot_slice
from .uncertainty import PoseWithCov, acquisition_uncertainty, invert_with_cov, point_cov_given_q

log = logging.getLogger(__name__)

STAGES = (
    "Pre-process",
    "Pre-integration",
    "B-spline",
    "Uncertainty",
    "Kalman Filter",
    "Mapping",
)


class _StageTimer:
    def __init__(self):
        self.acc = {name: 0.0 for name in STAGES}

    def add(self, name: str, seconds: float) -> None:
        self.acc[name] += seconds

    class _Ctx:
        def __init__(self, timer, name):
            self.timer, self.name = timer, name

        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            self.timer.add(self.name, time.perf_counter() - self.t0)

    def section(self, name: str) -> "_StageTimer._Ctx":
        return self._Ctx(self, name)


@dataclass
class FrameLog:
    t: float
    updated: bool
    iterations: int
    converged: bool
    w_l: float
    n_points: int
    n_residuals: int
    map_size: int
    stages: dict

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "updated": self.updated,
            "iterations": self.iterations,
            "converged": self.converged,
            "w_l": self.w_l,
            "n_points": self.n_points,
            "n_residuals": self.n_residuals,
            "map_size": self.map_size,
            "stages": {k: float(v) for k, v in self.stages.items()},
        }


@dataclass
class RunResult:
    times: list = field(default_factory=list)
    rots: list = field(default_factory=list)
    trans: list = field(default_factory=list)
    frames: list[FrameLog] = field(default_factory=list)
    kmap: KdMap | None = None
    starved: bool = False


class Odometry:
    """Offline driver over a dataset directory produced by the simulator
    (or anything matching the manifest/stream formats)."""

    def __init__(self, dataset_dir, config: RunConfig):
        self.config = config
        self.dir = Path(dataset_dir)
        self.manifest = read_manifest(self.dir / "manifest.json")

        self.imu_times, self._gyro, self._accel = read_imu_csv(
            self.dir / self.manifest["imu"]["file"]
        )
        if len(self.imu_times) < 4:
            raise ValueError("IMU stream missing or too short")
        self.imu_dt = float(np.median(np.diff(self.imu_times)))
        self.imu_idx = 0

        man_lidars = sorted(self.manifest["lidars"], key=lambda e: e["id"])
        self.n_lidars = len(man_lidars)
        if self.n_lidars == 0:
            raise ValueError("manifest declares no LiDARs")
        extrinsics = [extrinsic_from_manifest(e["extrinsic"]) for e in man_lidars]

        self.scan_streams: list[LidarScan] = []
        for entry in man_lidars:
            times, pts = read_scan_points(self.dir / entry["file"])
            self.scan_streams += split_scans(
                times, pts, entry["id"], entry["rate"], entry["phase"]
            )
        self.scan_streams.sort(key=lambda s: s.arrival)

        init = self.manifest["init"]
        x0 = FilterState(
            rot=quat_to_rot(np.asarray(init["quat"], dtype=float)),
            trans=np.asarray(init["position"], dtype=float),
            vel=np.asarray(init["velocity"], dtype=float),
            gravity=np.asarray(self.manifest.get("gravity", [0, 0, -9.81]), dtype=float),
            extrinsics=extrinsics,
        )
        cov0 = self._initial_cov(x0)

        man_imu = self.manifest["imu"]
        noise = NoiseParams(
            gyro_noise=config.gyro_noise if config.gyro_noise is not None else man_imu["gyro_noise"],
            accel_noise=config.accel_noise if config.accel_noise is not None else man_imu["accel_noise"],
            gyro_bias_walk=(
                config.gyro_bias_walk if config.gyro_bias_walk is not None else man_imu["gyro_bias_walk"]
            ),
            accel_bias_walk=(
                config.accel_bias_walk if config.accel_bias_walk is not None else man_imu["accel_bias_walk"]
            ),
        )
        noise.gyro_noise = max(noise.gyro_noise, config.floor_gyro_noise)
        noise.accel_noise = max(noise.accel_noise, config.floor_accel_noise)

        self.prop = Propagator(float(self.imu_times[0]), x0, cov0, noise)
        self.traj = SplineTrajectory(self.prop) if config.use_spline else RawTrajectory(self.prop)
        self.kmap = KdMap(
            voxel_size=config.voxel_size,
            tau=config.tau,
            capacity=config.map_capacity,
            box_half_widths=config.z_diag,
        )
        self.queues = ScanQueues(self.n_lidars, config.queue_depth)
        self.params = config.weight_params()
        self.Z = np.diag(config.z_diag)
        self.last_frame_t = -np.inf
        self.frame_idx = 0

    def _initial_cov(self, x0: FilterState) -> np.ndarray:
        c = self.config
        diag = np.concatenate(
            [
                np.full(3, c.init_rot_cov),
                np.full(3, c.init_trans_cov),
                np.full(3, c.init_vel_cov),
                np.full(3, c.init_bg_cov),
                np.full(3, c.init_ba_cov),
                np.full(3, c.init_grav_cov),
            ]
            + [np.array([c.init_ext_rot_cov] * 3 + [c.init_ext_trans_cov] * 3)]
            * x0.num_lidars
        )
        return np.diag(diag)

    # ------------------------------------------------------------------
    def run(self) -> RunResult:
        result = RunResult(kmap=self.kmap)
        for scan in self.scan_streams:
            if len(scan) < 8:
                continue
            if scan.arrival <= self.last_frame_t:
                log.warning(
                    "dropping stale scan (lidar %d, arrival %.3f)",
                    scan.lidar_id,
                    scan.arrival,
                )
                continue
            self.queues.push(scan)
            while self.queues.ready():
                selected = self.queues.select()
                if selected is None:
                    break
                frame_log = self._process_frame(*selected, result)
                if frame_log is None:
                    result.starved = True
                    return result
        return result

    def _feed_imu_until(self, t_target: float) -> bool:
        while self.prop.last_time < t_target:
            if self.imu_idx >= len(self.imu_times):
                return False
            self.prop.feed(
                ImuSample(
                    float(self.imu_times[self.imu_idx]),
                    self._gyro[self.imu_idx],
                    self._accel[self.imu_idx],
                )
            )
            self.imu_idx += 1
        return True

    # ------------------------------------------------------------------
    def _process_frame(self, scans, ref_pos, result: RunResult):
        timer = _StageTimer()
        t_i = scans[ref_pos].arrival

        with timer.section("Pre-integration"):
            if not self._feed_imu_until(t_i + 2.5 * self.imu_dt):
                log.warning("IMU stream exhausted before %.3f: stopping", t_i)
                return None
            self.traj.refresh()

        ext = self.prop.x_cur.extrinsics
        with timer.section("B-spline"):
            undistorted = [undistort(s, self.traj, ext[s.lidar_id]) for s in scans]
            frame = merge(scans, undistorted, self.traj, ext, ref_pos)

        with timer.section("Pre-process"):
            ds_idx = voxel_downsample_indices(frame.merged, self.config.voxel_size)

        prior_state = self.prop.state_at(t_i)
        pose_i = self.traj.pose_at(t_i)
        prior_state.rot = pose_i.rot.copy()
        prior_state.trans = pose_i.trans.copy()
        prior_cov = self.prop.cov_assigned(t_i).copy()

        with timer.section("Uncertainty"):
            point_covs = self._point_uncertainty(frame, prior_state, prior_cov)
            residual_fn, probe = self._make_residual_fn(frame, ds_idx)
            z0, _, _ = probe(prior_state)
            if self.config.uncertainty_mode == "none":
                w_l = 1.0
            else:
                w_l = localization_weight(probe.normals, self.params)

        updated = False
        iterations = 0
        converged = True
        if len(z0) >= self.config.min_residuals:
            with timer.section("Kalman Filter"):
                update = iterate_update(
                    Prior(prior_state, prior_cov),
                    residual_fn,
                    w_l=w_l,
                    eps=self.config.epsilon,
                    max_iter=self.config.max_iter,
                )
            x_opt, cov_opt = update.state, update.cov
            iterations, converged = update.iterations, update.converged
            updated = True
        else:
            if self.frame_idx > 0:
                log.warning(
                    "frame %.3f: only %d residuals, skipping update",
                    t_i,
                    len(z0),
                )
            x_opt, cov_opt = prior_state, prior_cov

        with timer.section("Mapping"):
            self.prop.apply_correction(t_i, x_opt, cov_opt)
            world = np.empty_like(frame.undistorted)
            for lid, temporal in frame.temporals.items():
                sel = frame.lidar_ids == lid
                chain = x_opt.pose @ temporal @ x_opt.extrinsics[lid]
                world[sel] = frame.undistorted[sel] @ chain.rot.T + chain.trans
            R_wp = x_opt.rot @ x_opt.extrinsics[frame.ref_lidar].rot
            world_covs = np.einsum("ij,njk,lk->nil", R_wp, point_covs, R_wp)
            self.kmap.insert_batch(world, world_covs, self.frame_idx)
            if self.frame_idx % 10 == 9:
                self.kmap.maybe_rebalance()
            self.prop.prune_before(t_i - 0.5)

        self.last_frame_t = t_i
        self.frame_idx += 1
        frame_log = FrameLog(
            t=t_i,
            updated=updated,
            iterations=iterations,
            converged=converged,
            w_l=float(w_l),
            n_points=len(frame),
            n_residuals=int(len(z0)),
            map_size=len(self.kmap),
            stages=timer.acc,
        )
        result.times.append(t_i)
        result.rots.append(x_opt.rot.copy())
        result.trans.append(x_opt.trans.copy())
        result.frames.append(frame_log)
        return frame_log

    # ------------------------------------------------------------------
    def _point_uncertainty(
        self, frame: MergedFrame, prior_state: FilterState, prior_cov: np.ndarray
    ) -> np.ndarray:
        """Per-point 3x3 covariance in the reference-LiDAR frame, per mode."""
        n = len(frame)
        mode = self.config.uncertainty_mode
        if mode == "none":
            return np.tile(self.Z, (n, 1, 1))

        covs = np.empty((n, 3, 3))
        ref = frame.ref_lidar
        ext_cov_ref = self._extrinsic_cov(prior_cov, ref)
        inv_ref = invert_with_cov(
            PoseWithCov(prior_state.extrinsics[ref], ext_cov_ref)
        )
        knot_times = np.asarray(self.prop.knot_times)
        for lid, temporal in frame.temporals.items():
            sel = np.flatnonzero(frame.lidar_ids == lid)
            extr = PoseWithCov(
                prior_state.extrinsics[lid], self._extrinsic_cov(prior_cov, lid)
            )
            if mode == "scan":
                rel = PoseWithCov(temporal, prior_cov[:6, :6])
                chain = acquisition_uncertainty(inv_ref, rel, extr)
                covs[sel] = point_cov_given_q(
                    frame.merged[sel], chain.cov, chain.pose.rot, self.Z
                )
                continue
            # Point-wise: group by IMU knot interval; the assigned covariance
            # is constant inside an interval, so the chain is shared.
            t_pts = frame.times[sel]
            interval = np.clip(
                np.searchsorted(knot_times, t_pts, side="right") - 1,
                0,
                len(knot_times) - 1,
            )
            for k in np.unique(interval):
                grp = sel[interval == k]
                rel = self.traj.relative_with_cov(frame.t_ref, float(frame.times[grp[0]]))
                chain = acquisition_uncertainty(inv_ref, rel, extr)
                covs[grp] = point_cov_given_q(
                    frame.merged[grp], chain.cov, chain.pose.rot, self.Z
                )
        return covs

    @staticmethod
    def _extrinsic_cov(cov: np.ndarray, lidar_idx: int) -> np.ndarray:
        sl = ext_rot_slice(lidar_idx)
        block = slice(sl.start, sl.start + 6)
        return cov[block, block]

    # ------------------------------------------------------------------
    def _make_residual_fn(self, frame: MergedFrame, ds_idx: np.ndarray):
        """Residual builder re-evaluated at each iterate; also a probe handle
        that stashes accepted plane normals for the localization weight."""
        cfg = self.config
        ids = frame.lidar_ids[ds_idx]
        p_u = frame.undistorted[ds_idx]
        temporals = [frame.temporals.get(l, Pose3.identity()) for l in range(self.n_lidars)]
        kmap = self.kmap
        params = self.params
        max_d2 = cfg.max_neighbor_dist**2
        uniform = cfg.uncertainty_mode == "none"
        mid_noise = 0.5 * (cfg.noise_min + cfg.noise_max)

        def build(x: FilterState):
            world = np.empty_like(p_u)
            for lid in range(self.n_lidars):
                sel = ids == lid
                if not np.any(sel):
                    continue
                chain = x.pose @ temporals[lid] @ x.extrinsics[lid]
                world[sel] = p_u[sel] @ chain.rot.T + chain.trans
            if len(kmap) < cfg.knn:
                empty = np.zeros(0)
                build.normals = np.zeros((0, 3))
                return empty, np.zeros((0, x.dim)), empty
            idx, d2 = kmap.knn_batch(world, cfg.knn)
            valid = (idx >= 0).all(axis=1) & (d2[:, -1] <= max_d2)
            vi = np.flatnonzero(valid)
            if len(vi) == 0:
                build.normals = np.zeros((0, 3))
                return np.zeros(0), np.zeros((0, x.dim)), np.zeros(0)
            neigh = kmap.pts[idx[vi]]
            normals, anchors, ok, rms = fit_planes_batch(neigh, cfg.d_plane)
            if ok.any():
                gate = max(
                    cfg.plane_rms_factor * float(np.median(rms[ok])),
                    cfg.plane_rms_floor,
                )
                ok &= rms <= gate
            keep = np.flatnonzero(ok)
            if len(keep) == 0:
                build.normals = np.zeros((0, 3))
                return np.zeros(0), np.zeros((0, x.dim)), np.zeros(0)
            rows = vi[keep]
            # The measurement model assumes the point itself satisfies local
            # planarity; drop correspondences whose point-plane distance
            # breaks the same bound the neighborhood had to meet.
            dists = np.einsum(
                "nj,nj->n", world[rows] - anchors[keep], normals[keep]
            )
            near = np.abs(dists) <= cfg.d_plane
            if near.sum() >= max(10, 0.2 * len(rows)):
                rows = rows[near]
                keep = keep[near]
            if uniform:
                scales = np.ones(len(rows))
                Rv = np.full(len(rows), mid_noise)
            else:
                plane_covs, _ = plane_covariance_batch(
                    kmap.covs[idx[rows]], params.tau
                )
                traces = np.trace(plane_covs, axis1=1, axis2=2)
                vmin, vmax = float(traces.min()), float(traces.max())
                scales = np.atleast_1d(np.asarray(
                    interval_rescale(traces, vmin, vmax, cfg.scale_max, cfg.scale_min)
                ))
                Rv = np.atleast_1d(np.asarray(
                    interval_rescale(traces, vmin, vmax, cfg.noise_max, cfg.noise_min)
                ))
            z, H = residual_rows_batch(
                x, ids[rows], temporals, p_u[rows], normals[keep], anchors[keep], scales
            )
            build.normals = normals[keep]
            return z, H, Rv

        build.normals = np.zeros((0, 3))
        return build, build


def run_and_export(dataset_dir, config: RunConfig, out_dir) -> dict:
    """Run odometry over a dataset and write all artifacts to out_dir.

    Emits est.tum, map.ply, frames.json (per-frame log incl. stage times),
    config.json (effective config), and metrics.json (accuracy vs the
    dataset's truth when present, plus timing summaries). Returns the
    metrics dictionary.
    """
    import json

    from .evaluate import ate, load_tum, rte

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    odo = Odometry(dataset_dir, config)
    t0 = time.perf_counter()
    result = odo.run()
    wall = time.perf_counter() - t0
    if not result.times:
        raise RuntimeError("no frames were processed (missing streams?)")

    from .evaluate import save_tum

    save_tum(out / "est.tum", result.times, result.rots, result.trans)
    result.kmap.export_ply(out / "map.ply")
    with open(out / "frames.json", "w") as f:
        json.dump([fl.to_dict() for fl in result.frames], f, indent=1)
    config.save(out / "config.json")

    stage_means = {
        name: float(np.mean([fl.stages[name] for fl in result.frames]))
        for name in STAGES
    }
    metrics = {
        "mode": config.mode,
        "frames": len(result.frames),
        "map_points": len(result.kmap),
        "starved": result.starved,
        "wall_time_s": wall,
        "stage_means_ms": {k: v * 1e3 for k, v in stage_means.items()},
        "mean_frame_ms": float(sum(stage_means.values()) * 1e3),
    }
    truth_path = Path(dataset_dir) / "truth.tum"
    if truth_path.exists():
        est = (np.asarray(result.times), np.stack(result.rots), np.stack(result.trans))
        truth = load_tum(truth_path)
        ate_t, ate_r = ate(est, truth)
        metrics["ATE_t"] = ate_t
        metrics["ATE_r"] = ate_r
        try:
            rte_t, rte_r = rte(est, truth, delta=config.rte_delta)
            metrics["RTE_t"] = rte_t
            metrics["RTE_r"] = rte_r
        except ValueError:
            log.warning("trajectory too short for RTE at delta=%.2f", config.rte_delta)
    with open(out / "metrics.json", "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
    return metrics
