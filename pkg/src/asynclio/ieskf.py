"""Iterated error-state Kalman update.

Each iteration re-linearizes the stacked point-to-plane residuals at the
current manifold iterate and solves the regularized normal equations in
state dimension:

    K = (H^T R^-1 H + P^-1)^-1 H^T R^-1,   P = J^-1 Sigma J^-T

with the localization weight multiplying both z and H. The prior pull-back
term keeps the posterior consistent with the propagated distribution as the
linearization point moves. Iteration stops when the manifold step norm drops
below eps; the posterior covariance is (I - K H) P at the final iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .state import FilterState, boxminus, boxplus, ext_rot_slice, symmetrize
from .lie import so3_right_jacobian_inv

log = logging.getLogger(__name__)

ResidualFn = Callable[[FilterState], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class Prior:
    """Propagated anchor state and covariance at the update time."""

    anchor: FilterState
    cov: np.ndarray


@dataclass
class UpdateResult:
    state: FilterState
    cov: np.ndarray
    iterations: int
    converged: bool
    objectives: list[float] = field(default_factory=list)


def prior_error(x_k: FilterState, anchor: FilterState) -> tuple[np.ndarray, np.ndarray]:
    """Prior residual x_k [-] anchor and the Jacobian of the lifted error.

    The Jacobian is identity on vector blocks and the inverse right Jacobian
    of the rotational residual on each rotation block; it is exactly identity
    on the first iteration, where x_k equals the anchor.
    """
    res = boxminus(x_k, anchor)
    J = np.eye(x_k.dim)
    J[0:3, 0:3] = so3_right_jacobian_inv(res[0:3])
    for i in range(x_k.num_lidars):
        sl = ext_rot_slice(i)
        J[sl, sl] = so3_right_jacobian_inv(res[sl])
    return res, J


def _solve_gain(
    H: np.ndarray, R: np.ndarray, P_inv: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Kalman gain and K @ H via the state-dimension normal equations."""
    Hw = H / R[:, None]
    S = H.T @ Hw + P_inv
    try:
        K = np.linalg.solve(S, Hw.T)
    except np.linalg.LinAlgError:
        log.warning("normal matrix singular; regularizing diagonal by 1e-9")
        S = S + 1e-9 * np.eye(S.shape[0])
        K = np.linalg.solve(S, Hw.T)
    return K, K @ H


def iterate_update(
    prior: Prior,
    residual_fn: ResidualFn,
    w_l: float = 1.0,
    eps: float = 1e-3,
    max_iter: int = 5,
) -> UpdateResult:
    """Run the iterated update until the manifold step norm falls below eps.

    residual_fn(x) must return (z, H, R) re-evaluated at x: scaled residual
    values, Jacobian rows, and per-residual noise variances. w_l scales z and
    H, leaving R untouched.
    """
    anchor = prior.anchor
    dim = anchor.dim
    sigma_inv = np.linalg.inv(prior.cov)
    x_k = anchor.copy()

    K = np.zeros((dim, 0))
    KH = np.zeros((dim, dim))
    P = prior.cov.copy()
    objectives: list[float] = []
    converged = False
    iterations = 0

    for it in range(max_iter):
        z, H, R = residual_fn(x_k)
        if len(z) == 0:
            raise ValueError("iterate_update requires at least one residual")
        res_prior, J = prior_error(x_k, anchor)
        objectives.append(
            float(res_prior @ sigma_inv @ res_prior + w_l**2 * np.sum(z * z / R))
        )

        z_s = w_l * z
        H_s = w_l * H
        J_inv = np.linalg.inv(J)
        P = symmetrize(J_inv @ prior.cov @ J_inv.T)
        P_inv = J.T @ sigma_inv @ J
        K, KH = _solve_gain(H_s, R, P_inv)

        delta = -K @ z_s - (np.eye(dim) - KH) @ (J_inv @ res_prior)
        x_next = boxplus(x_k, delta)
        iterations = it + 1
        step = np.linalg.norm(boxminus(x_next, x_k))
        x_k = x_next
        if step < eps:
            converged = True
            break

    # Final objective at the emitted state.
    z, _, R = residual_fn(x_k)
    res_prior, _ = prior_error(x_k, anchor)
    objectives.append(
        float(res_prior @ sigma_inv @ res_prior + w_l**2 * np.sum(z * z / R))
    )

    cov = symmetrize((np.eye(dim) - KH) @ P)
    return UpdateResult(x_k, cov, iterations, converged, objectives)


def finalize(result: UpdateResult, propagator, t: float) -> None:
    """Adopt the optimum as the next propagation anchor and fix the buffer."""
    propagator.apply_correction(t, result.state, result.cov)
