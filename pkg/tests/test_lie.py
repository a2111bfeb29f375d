"""Rotation/rigid-transform algebra and manifold operator tests."""

import numpy as np
import pytest

from asynclio.lie import (
    Pose3,
    adjoint,
    circdot,
    point_jacobian,
    quat_to_rot,
    rot_to_quat,
    se3_exp,
    se3_exp_batch,
    se3_log,
    se3_log_batch,
    skew,
    so3_exp,
    so3_exp_batch,
    so3_log,
    so3_log_batch,
)
from asynclio.state import FilterState, boxminus, boxplus


def matrix_exp_series(w, terms=50):
    """Truncated power-series oracle for the matrix exponential."""
    K = skew(w)
    acc = np.eye(3)
    term = np.eye(3)
    for n in range(1, terms):
        term = term @ K / n
        acc = acc + term
    return acc


def random_twist(rng, rot_norm=None):
    xi = rng.normal(size=6)
    if rot_norm is not None:
        n = np.linalg.norm(xi[:3])
        xi[:3] *= rot_norm / n
    return xi


class TestSo3Exp:
    def test_identity(self):
        assert np.allclose(so3_exp([0.0, 0.0, 0.0]), np.eye(3))

    def test_quarter_turn_about_x(self):
        R = so3_exp([np.pi / 2, 0.0, 0.0])
        assert np.allclose(R @ [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], atol=1e-12)

    def test_matches_series_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            w = rng.normal(size=3)
            w *= 0.3 / np.linalg.norm(w)
            assert np.abs(so3_exp(w) - matrix_exp_series(w)).max() < 1e-12

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            so3_exp([np.nan, 0.0, 0.0])

    def test_orthonormality_and_det(self):
        rng = np.random.default_rng(3)
        W = rng.normal(size=(2000, 3)) * rng.uniform(0, 3, size=(2000, 1))
        R = so3_exp_batch(W)
        err = R @ np.transpose(R, (0, 2, 1)) - np.eye(3)
        assert np.linalg.norm(err, axis=(1, 2)).max() < 1e-9
        assert np.linalg.det(R).min() > 0

    def test_small_angle_branch(self):
        w = np.array([1e-10, -2e-10, 5e-11])
        assert np.abs(so3_exp(w) - matrix_exp_series(w)).max() < 1e-18


class TestSe3ExpLog:
    def test_zero_twist(self):
        T = se3_exp(np.zeros(6))
        assert np.allclose(T.rot, np.eye(3))
        assert np.allclose(T.trans, 0.0)

    def test_pure_translation(self):
        T = se3_exp([0.0, 0.0, 0.0, 1.0, 2.0, 3.0])
        assert np.allclose(T.rot, np.eye(3))
        assert np.allclose(T.trans, [1.0, 2.0, 3.0])

    def test_round_trip_1000(self):
        rng = np.random.default_rng(11)
        xi = rng.normal(size=(1000, 6))
        norms = np.linalg.norm(xi[:, :3], axis=1, keepdims=True)
        xi[:, :3] *= rng.uniform(0, 2.5, size=(1000, 1)) / norms
        R, t = se3_exp_batch(xi)
        back = se3_log_batch(R, t)
        assert np.abs(back - xi).max() < 1e-9

    def test_log_near_pi_raises(self):
        T = Pose3(so3_exp([np.pi - 1e-8, 0, 0]), np.zeros(3))
        with pytest.raises(ValueError):
            se3_log(T)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        xi = rng.normal(size=(20, 6))
        R, t = se3_exp_batch(xi)
        for i in range(20):
            Ts = se3_exp(xi[i])
            assert np.allclose(Ts.rot, R[i], atol=1e-14)
            assert np.allclose(Ts.trans, t[i], atol=1e-14)


class TestPose3:
    def test_compose_inverse_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            T = se3_exp(random_twist(rng, rot_norm=rng.uniform(0, 2.5)))
            TI = T @ T.inverse()
            assert np.abs(TI.rot - np.eye(3)).max() < 1e-9
            assert np.abs(TI.trans).max() < 1e-9

    def test_associativity(self):
        rng = np.random.default_rng(6)
        A, B, C = (se3_exp(rng.normal(size=6)) for _ in range(3))
        left = (A @ B) @ C
        right = A @ (B @ C)
        assert np.allclose(left.as_matrix(), right.as_matrix(), atol=1e-12)

    def test_apply_batch(self):
        T = se3_exp([0.1, -0.2, 0.3, 1.0, 0.0, -1.0])
        pts = np.random.default_rng(0).normal(size=(5, 3))
        batch = T.apply(pts)
        for i in range(5):
            assert np.allclose(batch[i], T.apply(pts[i]))


class TestAdjoint:
    def test_identity_pose(self):
        assert np.allclose(adjoint(Pose3.identity()), np.eye(6))

    def test_pure_rotation_block_diag(self):
        R = so3_exp([0.3, -0.1, 0.7])
        ad = adjoint(Pose3(R, np.zeros(3)))
        assert np.allclose(ad[:3, :3], R)
        assert np.allclose(ad[3:, 3:], R)
        assert np.allclose(ad[:3, 3:], 0.0)
        assert np.allclose(ad[3:, :3], 0.0)

    def test_first_order_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            T = se3_exp(random_twist(rng, rot_norm=rng.uniform(0, 2.0)))
            xi = rng.normal(size=6)
            xi *= 1e-4 / np.linalg.norm(xi)
            lhs = adjoint(T) @ xi
            rhs = se3_log(T @ se3_exp(xi) @ T.inverse())
            assert np.abs(lhs - rhs).max() < 1e-7

    def test_inverse_property(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            T = se3_exp(random_twist(rng, rot_norm=rng.uniform(0, 2.0)))
            assert (
                np.abs(adjoint(T.inverse()) - np.linalg.inv(adjoint(T))).max() < 1e-9
            )


class TestCircdot:
    def test_origin_point(self):
        out = circdot([0.0, 0.0, 0.0, 1.0])
        assert np.allclose(out[:3, :3], np.eye(3))
        assert np.allclose(out[:3, 3:], 0.0)
        assert np.allclose(out[3, :], 0.0)

    def test_eq_definition(self):
        out = circdot([1.0, 2.0, 3.0, 1.0])
        assert np.allclose(out[:3, 3:], -skew([1.0, 2.0, 3.0]))
        assert np.allclose(out[:3, :3], np.eye(3))

    def test_first_order_linearization(self):
        # circdot columns are [trans; rot]; se3_exp takes [rot; trans].
        rng = np.random.default_rng(12)
        for _ in range(20):
            q = np.append(rng.normal(size=3), 1.0)
            xi = rng.normal(size=6)
            xi *= 1e-5 / np.linalg.norm(xi)
            xi_paper = np.concatenate([xi[3:], xi[:3]])
            moved = se3_exp(xi).as_matrix() @ q
            approx = q + circdot(q) @ xi_paper
            assert np.abs(moved - approx).max() < 10 * np.linalg.norm(xi) ** 2

    def test_quadratic_error_decay(self):
        rng = np.random.default_rng(13)
        q = np.append(rng.normal(size=3), 1.0)
        xi = rng.normal(size=6)
        xi *= 1e-2 / np.linalg.norm(xi)

        def lin_err(x):
            xp = np.concatenate([x[3:], x[:3]])
            return np.abs(se3_exp(x).as_matrix() @ q - q - circdot(q) @ xp).max()

        assert lin_err(xi) / lin_err(0.5 * xi) >= 3.5

    def test_point_jacobian_consistency(self):
        # point_jacobian is the top block of circdot in canonical order.
        q = np.array([0.5, -1.0, 2.0])
        pj = point_jacobian(q)
        cd = circdot(np.append(q, 1.0))
        assert np.allclose(pj[:, :3], cd[:3, 3:])
        assert np.allclose(pj[:, 3:], cd[:3, :3])


def random_state(rng, n_lidars=2):
    return FilterState(
        rot=so3_exp(rng.normal(size=3)),
        trans=rng.normal(size=3),
        vel=rng.normal(size=3),
        bias_gyro=0.01 * rng.normal(size=3),
        bias_accel=0.05 * rng.normal(size=3),
        gravity=np.array([0.0, 0.0, -9.81]) + 0.01 * rng.normal(size=3),
        extrinsics=[
            Pose3(so3_exp(rng.normal(size=3)), rng.normal(size=3))
            for _ in range(n_lidars)
        ],
    )


class TestBoxOps:
    def test_boxplus_zero(self):
        rng = np.random.default_rng(21)
        x = random_state(rng)
        y = boxplus(x, np.zeros(x.dim))
        assert np.abs(boxminus(y, x)).max() < 1e-12

    def test_boxminus_self_is_zero(self):
        x = random_state(np.random.default_rng(22))
        assert np.abs(boxminus(x, x)).max() < 1e-12

    def test_round_trip_500(self):
        rng = np.random.default_rng(23)
        worst = 0.0
        for _ in range(500):
            x = random_state(rng)
            delta = rng.normal(size=x.dim)
            for sl in (slice(0, 3), slice(18, 21), slice(24, 27)):
                n = np.linalg.norm(delta[sl])
                delta[sl] *= rng.uniform(0, 0.99) / n
            back = boxminus(boxplus(x, delta), x)
            worst = max(worst, np.abs(back - delta).max())
        assert worst < 1e-9

    def test_boxplus_then_boxminus_recovers_state(self):
        rng = np.random.default_rng(24)
        a, b = random_state(rng), random_state(rng)
        rebuilt = boxplus(b, boxminus(a, b))
        assert np.abs(boxminus(rebuilt, a)).max() < 1e-9

    def test_dimension_mismatch(self):
        x = random_state(np.random.default_rng(25))
        with pytest.raises(ValueError):
            boxplus(x, np.zeros(x.dim + 1))


class TestQuaternions:
    def test_round_trip(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            R = so3_exp(rng.normal(size=3) * rng.uniform(0, 3))
            assert np.abs(quat_to_rot(rot_to_quat(R)) - R).max() < 1e-12

    def test_batch_log_matches_scalar(self):
        rng = np.random.default_rng(32)
        W = rng.normal(size=(50, 3))
        R = so3_exp_batch(W)
        logs = so3_log_batch(R)
        for i in range(50):
            assert np.allclose(logs[i], so3_log(R[i]), atol=1e-12)
