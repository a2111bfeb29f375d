"""Asynchronous multi-LiDAR-inertial odometry.

Continuous-time pose interpolation for undistortion and inter-sensor
temporal compensation, point-wise uncertainty propagation, an iterated
error-state Kalman filter, and an uncertainty-gated incremental point map,
plus a deterministic synthetic-sensor simulator for closed-loop validation.
"""

__version__ = "0.1.0"
