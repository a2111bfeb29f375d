"""Iterated error-state update tests against closed-form oracles."""

import numpy as np
import pytest

from asynclio.ieskf import Prior, finalize, iterate_update, prior_error
from asynclio.lie import Pose3, so3_exp
from asynclio.state import FilterState, boxminus, boxplus


def make_state(rng=None, n_lidars=1):
    if rng is None:
        return FilterState(extrinsics=[Pose3.identity() for _ in range(n_lidars)])
    return FilterState(
        rot=so3_exp(0.4 * rng.normal(size=3)),
        trans=rng.normal(size=3),
        vel=rng.normal(size=3),
        extrinsics=[
            Pose3(so3_exp(0.2 * rng.normal(size=3)), rng.normal(size=3))
            for _ in range(n_lidars)
        ],
    )


def random_spd(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim))
    M = A @ A.T + dim * np.eye(dim)
    return M * scale


class TestPriorError:
    def test_first_iterate_identity(self):
        x = make_state(np.random.default_rng(0))
        res, J = prior_error(x, x)
        assert np.abs(res).max() < 1e-12
        assert np.abs(J - np.eye(x.dim)).max() < 1e-12

    def test_pure_translation_offset(self):
        x = make_state(np.random.default_rng(1))
        delta = np.zeros(x.dim)
        delta[3:6] = [0.1, -0.2, 0.3]
        res, J = prior_error(boxplus(x, delta), x)
        assert np.allclose(res[3:6], [0.1, -0.2, 0.3])
        assert np.abs(J[3:6] - np.eye(x.dim)[3:6]).max() < 1e-12

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        anchor = make_state(rng, n_lidars=2)
        x_k = boxplus(anchor, 0.3 * rng.normal(size=anchor.dim))
        _, J = prior_error(x_k, anchor)
        eps = 1e-6
        for i in range(anchor.dim):
            e = np.zeros(anchor.dim)
            e[i] = eps
            plus = boxminus(boxplus(x_k, e), anchor)
            minus = boxminus(boxplus(x_k, -e), anchor)
            fd = (plus - minus) / (2 * eps)
            scale = max(1.0, np.abs(J[:, i]).max())
            assert np.abs(fd - J[:, i]).max() / scale < 1e-5


def vector_blocks(x: FilterState) -> np.ndarray:
    """Stack the purely additive blocks (translation, velocity)."""
    return np.concatenate([x.trans, x.vel])


class TestLinearGaussianOracle:
    def _toy(self, seed, m=7):
        # Identity-manifold setup: rotation blocks are uncorrelated with the
        # observed vector blocks, so boxplus reduces to vector addition and
        # the textbook linear-Gaussian posterior is exact.
        rng = np.random.default_rng(seed)
        anchor = make_state()
        anchor.trans = rng.normal(size=3)
        anchor.vel = rng.normal(size=3)
        dim = anchor.dim
        cov = np.zeros((dim, dim))
        vec = np.r_[3:18, 21:24]
        sub = random_spd(rng, len(vec), 1e-2)
        cov[np.ix_(vec, vec)] = sub
        cov[0:3, 0:3] = 1e-4 * np.eye(3)
        cov[18:21, 18:21] = 1e-4 * np.eye(3)
        A = rng.normal(size=(m, 6))
        y = rng.normal(size=m)
        R = rng.uniform(0.01, 0.1, size=m)

        def residual_fn(x):
            z = A @ vector_blocks(x) - y
            H = np.zeros((m, dim))
            H[:, 3:9] = A
            return z, H, R

        return anchor, cov, A, y, R, residual_fn

    def test_matches_bayesian_linear_regression(self):
        anchor, cov, A, y, R, residual_fn = self._toy(3)
        out = iterate_update(Prior(anchor, cov), residual_fn, w_l=1.0, eps=1e-12)

        # Closed-form posterior over the stacked state (linear observation).
        dim = anchor.dim
        H_full = np.zeros((len(y), dim))
        H_full[:, 3:9] = A
        S = H_full @ cov @ H_full.T + np.diag(R)
        K = cov @ H_full.T @ np.linalg.inv(S)
        innovation = y - A @ vector_blocks(anchor)
        mean_delta = K @ innovation
        cov_post = (np.eye(dim) - K @ H_full) @ cov

        assert np.abs(boxminus(out.state, anchor) - mean_delta).max() < 1e-10
        assert np.abs(out.cov - cov_post).max() < 1e-10
        assert out.converged

    def test_single_residual_scalar_kalman(self):
        rng = np.random.default_rng(4)
        anchor = make_state()
        dim = anchor.dim
        cov = np.eye(dim) * 0.04
        a = np.zeros(dim)
        a[4] = 1.0  # observe translation-y
        y = 0.37
        R = np.array([0.0625])

        def residual_fn(x):
            z = np.array([a[4] * x.trans[1] - y])
            return z, a[None, :], R

        out = iterate_update(Prior(anchor, cov), residual_fn, eps=1e-12)
        k = 0.04 / (0.04 + 0.0625)
        assert abs(out.state.trans[1] - k * y) < 1e-12
        assert abs(out.cov[4, 4] - (1 - k) * 0.04) < 1e-12

    def test_scale_invariance(self):
        anchor, cov, A, y, R, residual_fn = self._toy(5)
        alpha = 3.7

        def scaled_fn(x):
            z, H, Rv = residual_fn(x)
            return alpha * z, alpha * H, alpha**2 * Rv

        out1 = iterate_update(Prior(anchor, cov), residual_fn, eps=1e-12)
        out2 = iterate_update(Prior(anchor, cov), scaled_fn, eps=1e-12)
        assert np.abs(boxminus(out1.state, out2.state)).max() < 1e-10

    def test_posterior_trace_never_exceeds_prior(self):
        anchor, cov, A, y, R, residual_fn = self._toy(6)
        out = iterate_update(Prior(anchor, cov), residual_fn, eps=1e-12)
        assert np.trace(out.cov) <= np.trace(cov) + 1e-12
        assert np.linalg.eigvalsh(out.cov).min() > -1e-12

    def test_zero_innovation_keeps_anchor(self):
        rng = np.random.default_rng(7)
        anchor = make_state()
        dim = anchor.dim
        cov = np.eye(dim) * 0.01
        A = rng.normal(size=(5, 6))
        y = A @ vector_blocks(anchor)  # consistent measurement

        def residual_fn(x):
            H = np.zeros((5, dim))
            H[:, 3:9] = A
            return A @ vector_blocks(x) - y, H, np.full(5, 0.01)

        out = iterate_update(Prior(anchor, cov), residual_fn, eps=1e-12)
        assert np.abs(boxminus(out.state, anchor)).max() < 1e-12
        assert np.linalg.eigvalsh(out.cov).min() > -1e-12


class TestIterationBehavior:
    def _nonlinear_fn(self, anchor, target_pose):
        # Point-like observations of three world anchors through the pose.
        pts_body = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        world = target_pose.apply(pts_body)

        def residual_fn(x):
            z, rows = [], []
            for pb, pw in zip(pts_body, world):
                pred = x.rot @ pb + x.trans
                for axis in range(3):
                    e = np.zeros(3)
                    e[axis] = 1.0
                    z.append(pred[axis] - pw[axis])
                    H = np.zeros(anchor.dim)
                    H[0:3] = -e @ x.rot @ np.array(
                        [[0, -pb[2], pb[1]], [pb[2], 0, -pb[0]], [-pb[1], pb[0], 0]]
                    )
                    H[3:6] = e
                    rows.append(H)
            return np.array(z), np.array(rows), np.full(9, 1e-4)

        return residual_fn

    def test_converges_and_reduces_error(self):
        rng = np.random.default_rng(8)
        anchor = make_state()
        true_delta = np.zeros(anchor.dim)
        true_delta[0:3] = 0.05 * rng.normal(size=3)
        true_delta[3:6] = 0.2 * rng.normal(size=3)
        target = boxplus(anchor, true_delta)
        fn = self._nonlinear_fn(anchor, target.pose)
        cov = np.eye(anchor.dim) * 0.1
        out = iterate_update(Prior(anchor, cov), fn, eps=1e-6, max_iter=10)
        assert out.converged
        err_prior = np.linalg.norm(boxminus(target, anchor)[:6])
        err_post = np.linalg.norm(boxminus(target, out.state)[:6])
        assert err_post < 0.01 * err_prior

    def test_objective_non_increasing(self):
        rng = np.random.default_rng(9)
        anchor = make_state()
        delta = np.zeros(anchor.dim)
        delta[0:3] = 0.1 * rng.normal(size=3)
        delta[3:6] = 0.3 * rng.normal(size=3)
        target = boxplus(anchor, delta)
        fn = self._nonlinear_fn(anchor, target.pose)
        out = iterate_update(
            Prior(anchor, np.eye(anchor.dim) * 0.1), fn, eps=1e-9, max_iter=8
        )
        diffs = np.diff(out.objectives)
        assert np.all(diffs <= 1e-12)

    def test_non_convergence_flag(self):
        anchor, cov = make_state(), None
        dim = anchor.dim

        def residual_fn(x):
            H = np.zeros((1, dim))
            H[0, 3] = 1.0
            return np.array([x.trans[0] - 5.0]), H, np.array([0.01])

        out = iterate_update(
            Prior(anchor, np.eye(dim) * 10.0), residual_fn, eps=0.0, max_iter=3
        )
        assert not out.converged
        assert out.iterations == 3

    def test_empty_batch_raises(self):
        anchor = make_state()

        def residual_fn(x):
            return np.zeros(0), np.zeros((0, anchor.dim)), np.zeros(0)

        with pytest.raises(ValueError):
            iterate_update(Prior(anchor, np.eye(anchor.dim)), residual_fn)


class TestFinalize:
    def test_anchor_replaced_and_buffer_consistent(self):
        from asynclio.imu import ImuSample, NoiseParams, Propagator

        x0 = make_state()
        prop = Propagator(0.0, x0, np.eye(x0.dim) * 1e-4, NoiseParams(0.01, 0.1, 0, 0))
        for k in range(30):
            prop.feed(
                ImuSample(k * 0.01, np.array([0, 0, 0.3]), x0.rot.T @ [0, 0, 9.81])
            )
        t_u = 0.253
        x_opt = boxplus(prop.state_at(t_u), 1e-3 * np.ones(x0.dim))
        from asynclio.ieskf import UpdateResult

        result = UpdateResult(x_opt, np.eye(x0.dim) * 1e-5, 2, True, [])
        finalize(result, prop, t_u)
        assert np.abs(boxminus(prop.state_at(t_u), x_opt)).max() < 1e-12
