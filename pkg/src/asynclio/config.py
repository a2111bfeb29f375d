"""Run configuration: weighting intervals, filter knobs, ablation mode.

Every key can come from (in priority order) an environment variable
ASYNCLIO_<KEY>, a JSON config file, or the built-in default. The emitted
effective-config JSON reparses to an equal RunConfig.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields

from .planes import WeightParams

MODES = ("RAW", "CNT", "F-UNC", "UNC", "FULL")
ENV_PREFIX = "ASYNCLIO_"


@dataclass
class RunConfig:
    mode: str = "FULL"
    # Bounded-rescaling intervals and gating threshold.
    scale_min: float = 1.0
    scale_max: float = 1.25
    noise_min: float = 0.0075
    noise_max: float = 0.0125
    weight_min: float = 0.5
    weight_max: float = 3.0
    band_min: float = 0.2
    band_max: float = 0.8
    tau: float = 1.0
    # Measurement covariance diagonal (sensor frame).
    z_diag: tuple = (0.05, 0.05, 0.05)
    # Update loop.
    epsilon: float = 1e-3
    max_iter: int = 5
    min_residuals: int = 20
    # Correspondence search / plane acceptance.
    knn: int = 5
    d_plane: float = 0.1
    max_neighbor_dist: float = 3.0
    # Adaptive flatness gate: a fit must have RMS within factor x the frame's
    # median (floored), rejecting surface-crossing neighborhoods that pass
    # the absolute d_plane bound.
    plane_rms_factor: float = 5.0
    plane_rms_floor: float = 5e-4
    # Map.
    voxel_size: float = 0.4
    map_capacity: int = 1
    # Scan queues.
    queue_depth: int = 8
    # Evaluation.
    rte_delta: float = 2.0
    # Initial covariance diagonal per block.
    init_rot_cov: float = 1e-5
    init_trans_cov: float = 1e-5
    init_vel_cov: float = 1e-3
    init_bg_cov: float = 1e-4
    init_ba_cov: float = 1e-2
    init_grav_cov: float = 1e-8
    init_ext_rot_cov: float = 1e-6
    init_ext_trans_cov: float = 1e-6
    # IMU noise overrides (None: use the dataset manifest values).
    gyro_noise: float | None = None
    accel_noise: float | None = None
    gyro_bias_walk: float | None = None
    accel_bias_walk: float | None = None
    # Process-noise floor: a filter driven with literally zero noise density
    # collapses its prior and locks in systematic error, so the propagation
    # model never claims less than this.
    floor_gyro_noise: float = 1e-3
    floor_accel_noise: float = 1e-2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.z_diag = tuple(float(v) for v in self.z_diag)

    # Mode switches: one code path, toggled mechanisms.
    @property
    def use_spline(self) -> bool:
        return self.mode in ("CNT", "FULL")

    @property
    def uncertainty_mode(self) -> str:
        """'none' (uniform weights), 'scan' (one covariance), or 'point'."""
        return {"RAW": "none", "CNT": "none", "F-UNC": "scan", "UNC": "point",
                "FULL": "point"}[self.mode]

    def weight_params(self) -> WeightParams:
        return WeightParams(
            self.scale_min, self.scale_max, self.noise_min, self.noise_max,
            self.weight_min, self.weight_max, self.band_min, self.band_max,
            self.tau,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["z_diag"] = list(self.z_diag)
        return d

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        known = {f.name for f in fields(RunConfig)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**d)

    @staticmethod
    def load(path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        """Defaults <- JSON file <- explicit overrides <- environment."""
        d = {}
        if path:
            with open(path) as f:
                d.update(json.load(f))
        if overrides:
            d.update({k: v for k, v in overrides.items() if v is not None})
        cfg = RunConfig.from_dict(d)
        return apply_env_overrides(cfg)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def apply_env_overrides(cfg: RunConfig) -> RunConfig:
    d = cfg.to_dict()
    for f in fields(RunConfig):
        raw = os.environ.get(ENV_PREFIX + f.name.upper())
        if raw is None:
            continue
        if f.name == "mode":
            d[f.name] = raw
        else:
            d[f.name] = json.loads(raw)
    return RunConfig.from_dict(d)
