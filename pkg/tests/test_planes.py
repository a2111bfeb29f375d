"""Plane fitting, bounded rescaling, residual rows, localization weight."""

import numpy as np
import pytest

from asynclio.lie import Pose3, se3_exp, so3_exp
from asynclio.planes import (
    Residual,
    WeightParams,
    fit_plane,
    fit_planes_batch,
    interval_rescale,
    localization_weight,
    plane_covariance,
    plane_covariance_batch,
    residual_row,
    residual_rows_batch,
)
from asynclio.state import FilterState, boxminus, boxplus


def random_spd3(rng, trace):
    A = rng.normal(size=(3, 3))
    M = A @ A.T
    return M * (trace / np.trace(M))


class TestIntervalRescale:
    def test_endpoints(self):
        assert interval_rescale(2.0, 2.0, 5.0, 1.25, 1.0) == 1.0
        assert interval_rescale(5.0, 2.0, 5.0, 1.25, 1.0) == 1.25

    def test_midpoint_paper_interval(self):
        assert np.isclose(interval_rescale(3.5, 2.0, 5.0, 1.25, 1.0), 1.125)

    def test_degenerate_range_returns_midpoint(self):
        assert interval_rescale(3.0, 3.0, 3.0, 1.25, 1.0) == 1.125

    def test_monotone(self):
        vals = interval_rescale(np.linspace(0, 1, 20), 0.0, 1.0, 3.0, 0.5)
        assert np.all(np.diff(vals) >= 0)
        assert vals.min() >= 0.5 and vals.max() <= 3.0


class TestPlaneCovariance:
    def test_equal_neighbors(self):
        rng = np.random.default_rng(0)
        S = random_spd3(rng, 0.3)
        cov, w = plane_covariance([S] * 5, tau=1.0)
        assert np.allclose(w, 0.2)
        assert np.abs(cov - 0.2 * S).max() < 1e-12
        assert abs(w.sum() - 1.0) < 1e-12

    def test_near_tau_neighbor_weight_vanishes(self):
        rng = np.random.default_rng(1)
        covs = [random_spd3(rng, 0.1) for _ in range(4)]
        covs.append(random_spd3(rng, 1.0 - 1e-9))
        _, w = plane_covariance(covs, tau=1.0)
        assert w[-1] < 1e-6
        assert abs(w.sum() - 1.0) < 1e-12

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(2)
        covs = [random_spd3(rng, rng.uniform(0.05, 0.9)) for _ in range(5)]
        tau = 1.0
        cov, w = plane_covariance(covs, tau)
        # Independent re-evaluation of the weighted-sample formula.
        heads = [tau - np.trace(c) for c in covs]
        w_ref = np.array(heads) / sum(heads)
        cov_ref = sum(wi**2 * c for wi, c in zip(w_ref, covs))
        assert np.allclose(w, w_ref, atol=1e-14)
        assert np.abs(cov - cov_ref).max() < 1e-14
        assert np.linalg.eigvalsh(cov).min() > -1e-15

    def test_gating_violation_raises(self):
        covs = [np.eye(3) * 0.1] * 4 + [np.eye(3)]
        with pytest.raises(ValueError):
            plane_covariance(covs, tau=1.0)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        stacks = np.stack(
            [[random_spd3(rng, rng.uniform(0.05, 0.9)) for _ in range(5)] for _ in range(8)]
        )
        covs, w = plane_covariance_batch(stacks, tau=1.0)
        for i in range(8):
            c_ref, w_ref = plane_covariance(stacks[i], tau=1.0)
            assert np.abs(covs[i] - c_ref).max() < 1e-14
            assert np.allclose(w[i], w_ref)


class TestFitPlane:
    def test_coplanar_accept(self):
        pts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0]], dtype=float
        )
        normal, anchor, ok = fit_plane(pts)
        assert ok
        assert abs(abs(normal[2]) - 1.0) < 1e-12
        assert np.abs((pts - anchor) @ normal).max() < 1e-12

    def test_outlier_rejected(self):
        pts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0.5]], dtype=float
        )
        _, _, ok = fit_plane(pts)
        assert not ok

    def test_rank_deficient_rejected(self):
        pts = np.stack([np.array([t, 2 * t, -t]) for t in range(5)]).astype(float)
        _, _, ok = fit_plane(pts)
        assert not ok

    def test_noisy_normal_recovery(self):
        # Spread-out neighborhoods (corner points + center with jitter), as a
        # voxel-downsampled 5-NN set would look, with sigma = 0.01 noise.
        rng = np.random.default_rng(4)
        corners = np.array(
            [[0.8, 0.8], [-0.8, 0.8], [0.8, -0.8], [-0.8, -0.8], [0.0, 0.0]]
        )
        hits = 0
        trials = 1000
        for _ in range(trials):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            basis = np.linalg.svd(n[None])[2][1:]
            uv = corners + 0.2 * rng.normal(size=(5, 2))
            pts = uv @ basis + 0.01 * rng.normal(size=(5, 1)) * n
            est, _, ok = fit_plane(pts, d_plane=0.1)
            if not ok:
                continue
            ang = np.degrees(np.arccos(min(1.0, abs(est @ n))))
            hits += ang < 2.0
        assert hits / trials > 0.95

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        stacks = rng.normal(size=(12, 5, 3))
        stacks[:, :, 2] *= 0.01
        normals, anchors, ok = fit_planes_batch(stacks)
        for i in range(12):
            n_ref, a_ref, ok_ref = fit_plane(stacks[i])
            assert ok[i] == ok_ref
            assert np.allclose(anchors[i], a_ref)
            if ok_ref:
                assert min(
                    np.abs(normals[i] - n_ref).max(), np.abs(normals[i] + n_ref).max()
                ) < 1e-12


def make_state(rng, n_lidars=2):
    return FilterState(
        rot=so3_exp(0.3 * rng.normal(size=3)),
        trans=rng.normal(size=3),
        vel=rng.normal(size=3),
        extrinsics=[
            Pose3(so3_exp(0.2 * rng.normal(size=3)), 0.3 * rng.normal(size=3))
            for _ in range(n_lidars)
        ],
    )


class TestResidualRow:
    def test_point_on_plane_zero(self):
        rng = np.random.default_rng(6)
        x = make_state(rng)
        temporal = se3_exp(0.01 * rng.normal(size=6))
        p_u = rng.normal(size=3)
        p_world = x.rot @ temporal.apply(x.extrinsics[0].apply(p_u)) + x.trans
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        z, _ = residual_row(x, 0, temporal, p_u, normal, p_world, scale=1.1)
        assert abs(z) < 1e-12

    def test_offset_along_normal_with_unit_scale(self):
        # Batch-minimum trace maps to the lower scale endpoint (1.0).
        rng = np.random.default_rng(7)
        x = FilterState(extrinsics=[Pose3.identity()])
        normal = np.array([0.0, 0.0, 1.0])
        p_u = np.array([0.3, -0.2, 0.1])
        anchor = np.array([0.0, 0.0, 0.0])
        scale = interval_rescale(0.2, 0.2, 0.7, 1.25, 1.0)  # batch min -> 1.0
        z, _ = residual_row(x, 0, Pose3.identity(), p_u, normal, anchor, scale)
        assert np.isclose(z, 0.1)

    def test_anchor_invariance_on_plane(self):
        rng = np.random.default_rng(8)
        x = make_state(rng)
        temporal = se3_exp(0.05 * rng.normal(size=6))
        p_u = rng.normal(size=3)
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        q1 = rng.normal(size=3)
        basis = np.linalg.svd(normal[None])[2][1:]
        q2 = q1 + basis.T @ rng.normal(size=2)  # same plane, other anchor
        z1, _ = residual_row(x, 1, temporal, p_u, normal, q1, 1.0)
        z2, _ = residual_row(x, 1, temporal, p_u, normal, q2, 1.0)
        assert abs(z1 - z2) < 1e-12

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        x = make_state(rng, n_lidars=2)
        temporal = se3_exp(0.05 * rng.normal(size=6))
        p_u = 2.0 * rng.normal(size=3)
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        anchor = rng.normal(size=3)
        scale = 1.17
        _, H = residual_row(x, 1, temporal, p_u, normal, anchor, scale)
        eps = 1e-6
        for i in range(x.dim):
            e = np.zeros(x.dim)
            e[i] = eps
            zp, _ = residual_row(boxplus(x, e), 1, temporal, p_u, normal, anchor, scale)
            zm, _ = residual_row(boxplus(x, -e), 1, temporal, p_u, normal, anchor, scale)
            fd = (zp - zm) / (2 * eps)
            assert abs(fd - H[i]) <= 1e-5 * max(1.0, abs(H[i]))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(10)
        x = make_state(rng, n_lidars=2)
        temporals = [se3_exp(0.03 * rng.normal(size=6)) for _ in range(2)]
        n = 25
        lidar_idx = rng.integers(0, 2, size=n)
        p_u = rng.normal(size=(n, 3))
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        anchors = rng.normal(size=(n, 3))
        scales = rng.uniform(1.0, 1.25, size=n)
        z_b, H_b = residual_rows_batch(x, lidar_idx, temporals, p_u, normals, anchors, scales)
        for i in range(n):
            z, H = residual_row(
                x, int(lidar_idx[i]), temporals[lidar_idx[i]], p_u[i],
                normals[i], anchors[i], scales[i],
            )
            assert abs(z_b[i] - z) < 1e-12
            assert np.abs(H_b[i] - H).max() < 1e-12


class TestLocalizationWeight:
    def test_parallel_normals_hit_min(self):
        params = WeightParams()
        normals = np.array([[0, 1, 0]] * 10 + [[0, -1, 0]] * 10, dtype=float)
        assert localization_weight(normals, params) == 0.5

    def test_isotropic_normals_hit_max(self):
        params = WeightParams()
        normals = np.array(
            [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
            dtype=float,
        )
        assert localization_weight(normals, params) == 3.0

    def test_band_midpoint(self):
        # Axis-aligned rows give singular values (1, 0.7, 0.5): ratio 0.5,
        # the midpoint of the (0.2, 0.8) band, maps to 1.75.
        params = WeightParams()
        normals = np.array([[1.0, 0, 0], [0, 0.7, 0], [0, 0, 0.5]])
        s = np.linalg.svd(normals, compute_uv=False)
        assert np.isclose(s[2] / s[0], 0.5)
        assert np.isclose(localization_weight(normals, params), 1.75)

    def test_too_few_normals_most_conservative(self):
        params = WeightParams()
        assert localization_weight(np.array([[1.0, 0, 0]]), params) == params.weight_min

    def test_always_within_interval(self):
        rng = np.random.default_rng(11)
        params = WeightParams()
        for _ in range(200):
            m = rng.integers(3, 40)
            normals = rng.normal(size=(m, 3))
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            w = localization_weight(normals, params)
            assert params.weight_min <= w <= params.weight_max

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            WeightParams(scale_min=2.0, scale_max=1.0)
        with pytest.raises(ValueError):
            WeightParams(tau=0.0)


def test_residual_dataclass_roundtrip():
    r = Residual(z=0.1, H=np.zeros(24), R=0.01)
    assert r.z == 0.1 and r.R == 0.01 and r.H.shape == (24,)
