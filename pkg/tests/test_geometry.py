import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supportcal.errors import NearPiRotation, OutOfView
from supportcal.geometry import (
    CameraIntrinsics,
    Pixel,
    Pose,
    Twist,
    compose,
    in_image,
    inverse,
    pose_error,
    project,
    project_jacobian,
    project_jacobians,
    project_points,
    se3_exp,
    se3_log,
    so3_exp,
    transform_point,
)

finite = st.floats(-3.0, 3.0, allow_nan=False)
twists = st.lists(finite, min_size=6, max_size=6).map(np.array)


def rot_z(angle):
    return Pose(so3_exp([0.0, 0.0, angle]), np.zeros(3))


def random_twist(rng, max_angle=3.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return np.concatenate([rng.uniform(-5, 5, 3), axis * rng.uniform(0, max_angle)])


class TestExpLog:
    def test_zero_twist_is_identity(self):
        T = se3_exp(np.zeros(6))
        assert np.array_equal(T.rotation, np.eye(3))
        assert np.array_equal(T.translation, np.zeros(3))

    def test_pure_translation(self):
        T = se3_exp(Twist(np.array([1.0, 2.0, 3.0]), np.zeros(3)))
        np.testing.assert_array_equal(T.rotation, np.eye(3))
        np.testing.assert_array_equal(T.translation, [1.0, 2.0, 3.0])

    def test_quarter_turn_about_z(self):
        T = se3_exp([0, 0, 0, 0, 0, math.pi / 2])
        np.testing.assert_allclose(T.rotation @ [1, 0, 0], [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(T.translation, 0.0, atol=1e-15)

    def test_log_identity(self):
        assert np.array_equal(se3_log(Pose()).vector(), np.zeros(6))

    def test_log_roundtrip_example(self):
        xi = np.array([0.1, 0, 0, 0, 0.2, 0])
        np.testing.assert_allclose(se3_log(se3_exp(xi)).vector(), xi, atol=1e-10)

    def test_small_angle_branch_matches_closed_form(self):
        # just above and below the series cutoff the two branches must agree
        for angle in (5e-9, 2e-8):
            xi = np.array([0.3, -0.2, 0.1, angle, -angle, angle / 2])
            T = se3_exp(xi)
            np.testing.assert_allclose(se3_log(T).vector(), xi, atol=1e-15)

    def test_roundtrip_1000_random_twists(self):
        rng = np.random.default_rng(1234)
        worst_twist = worst_matrix = 0.0
        for _ in range(1000):
            xi = random_twist(rng)
            T = se3_exp(xi)
            back = se3_log(T).vector()
            worst_twist = max(worst_twist, np.max(np.abs(back - xi)))
            worst_matrix = max(worst_matrix, np.max(np.abs(se3_exp(back).matrix() - T.matrix())))
        assert worst_twist < 1e-9
        assert worst_matrix < 1e-9

    def test_near_pi_raises(self):
        T = se3_exp([0, 0, 0, math.pi - 1e-7, 0, 0])
        with pytest.raises(NearPiRotation):
            se3_log(T)

    @given(twists)
    def test_exp_yields_valid_pose(self, xi):
        R = se3_exp(xi).rotation
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9


class TestCompose:
    def test_identity_left(self):
        B = se3_exp([0.3, 0.1, -2, 0.4, 0.5, -0.1])
        C = compose(Pose(), B)
        np.testing.assert_array_equal(C.matrix(), B.matrix())

    def test_inverse(self):
        A = se3_exp([1, -2, 0.5, 0.7, -0.3, 1.1])
        np.testing.assert_allclose(compose(A, inverse(A)).matrix(), np.eye(4), atol=1e-12)

    def test_z_rotations_add(self):
        C = compose(rot_z(math.pi / 4), rot_z(math.pi / 4))
        np.testing.assert_allclose(C.matrix(), rot_z(math.pi / 2).matrix(), atol=1e-15)

    def test_applies_right_operand_first(self):
        A = Pose(np.eye(3), [1.0, 0, 0])
        B = rot_z(math.pi / 2)
        p = np.array([1.0, 0, 0])
        np.testing.assert_allclose(transform_point(compose(A, B), p),
                                   transform_point(A, transform_point(B, p)), atol=1e-15)

    @settings(max_examples=200)
    @given(twists, twists, twists)
    def test_associativity(self, a, b, c):
        A, B, C = se3_exp(a), se3_exp(b), se3_exp(c)
        lhs = compose(compose(A, B), C).matrix()
        rhs = compose(A, compose(B, C)).matrix()
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_reorthonormalizes_long_chains(self):
        rng = np.random.default_rng(0)
        T = Pose()
        for _ in range(10000):
            T = compose(se3_exp(random_twist(rng, 0.5) * 0.1), T)
        R = T.rotation
        assert np.max(np.abs(R.T @ R - np.eye(3))) <= 1e-9

    def test_pose_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_pose_is_immutable(self):
        T = Pose()
        with pytest.raises(ValueError):
            T.rotation[0, 0] = 2.0


class TestTransformProject:
    def test_transform_examples(self):
        np.testing.assert_array_equal(transform_point(Pose(), [1, 2, 3]), [1, 2, 3])
        np.testing.assert_array_equal(transform_point(Pose(np.eye(3), [0, 0, 1]), [0, 0, 0]), [0, 0, 1])
        np.testing.assert_allclose(transform_point(rot_z(math.pi / 2), [1, 0, 0]), [0, 1, 0], atol=1e-12)

    def test_optical_axis(self, K):
        assert project(K, [0, 0, 5]) == Pixel(320.0, 240.0)

    def test_offset_point(self, K):
        assert project(K, [1, 0, 5]) == Pixel(420.0, 240.0)

    def test_behind_camera(self, K):
        with pytest.raises(OutOfView):
            project(K, [0, 0, -1])
        with pytest.raises(OutOfView):
            project(K, [0, 0, 1e-3])

    def test_vectorized_matches_scalar(self, K):
        P = np.array([[0, 0, 5], [1, 0, 5], [0, 0, -1], [-2, 1, 3]], float)
        uv, ok = project_points(K, P)
        assert ok.tolist() == [True, True, False, True]
        for p, row, good in zip(P, uv, ok):
            if good:
                assert tuple(row) == tuple(project(K, p))
            else:
                assert np.all(np.isnan(row))

    def test_visibility_predicate(self, K):
        assert in_image(K, [0.0, 0.0])
        assert not in_image(K, [640.0, 10.0])
        assert not in_image(K, [10.0, -0.1])
        assert in_image(K, [639.999, 479.999])

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 50), st.floats(0.01, 100))
    def test_scale_consistency(self, x, y, z, lam):
        K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
        a = project(K, [x, y, z])
        b = project(K, [lam * x, lam * y, lam * z])
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-9)

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(0.0, 500.0, 320.0, 240.0, 640, 480)
        with pytest.raises(ValueError):
            CameraIntrinsics(500.0, 500.0, 640.0, 240.0, 640, 480)


def fd_jacobian(K, T, p, h=1e-6):
    J = np.empty((2, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        plus = project(K, transform_point(compose(se3_exp(e), T), p))
        minus = project(K, transform_point(compose(se3_exp(-e), T), p))
        J[:, k] = (np.array(plus) - np.array(minus)) / (2 * h)
    return J


def random_visible_configs(K, n, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        T = se3_exp(random_twist(rng))
        z = rng.uniform(1.0, 40.0)
        uv = rng.uniform([0, 0], [K.width, K.height])
        p_cam = np.array([(uv[0] - K.cx) * z / K.fx, (uv[1] - K.cy) * z / K.fy, z])
        out.append((T, transform_point(inverse(T), p_cam)))
    return out


class TestJacobian:
    def test_matches_central_differences(self, K):
        worst = 0.0
        for T, p in random_visible_configs(K, 200, seed=7):
            A = project_jacobian(K, T, p)
            F = fd_jacobian(K, T, p)
            rel = np.abs(A - F) / np.maximum(np.maximum(np.abs(A), np.abs(F)), 1.0)
            worst = max(worst, rel.max())
        assert worst < 1e-5

    def test_optical_axis_values(self, K):
        J = project_jacobian(K, Pose(), [0, 0, 5])
        assert J[0, 0] == pytest.approx(100.0)
        assert J[0, 2] == 0.0
        assert J[1, 2] == 0.0

    def test_vectorized_agrees(self, K):
        P = np.array([[0.3, -0.2, 4.0], [1.0, 2.0, 9.0]])
        J = project_jacobians(K, P)
        for i, p in enumerate(P):
            np.testing.assert_array_equal(J[i], project_jacobian(K, Pose(), p))

    def test_behind_camera_raises(self, K):
        with pytest.raises(OutOfView):
            project_jacobian(K, Pose(), [0, 0, -2])


class TestPoseError:
    def test_equal(self):
        A = se3_exp([1, 2, 3, 0.1, 0.2, 0.3])
        assert pose_error(A, A) == (0.0, 0.0)

    def test_translation_only(self):
        t, r = pose_error(Pose(np.eye(3), [0.1, 0, 0]), Pose())
        assert t == pytest.approx(0.1, abs=1e-15) and r == 0.0

    def test_quarter_turn(self):
        t, r = pose_error(rot_z(math.pi / 2), Pose())
        assert t == 0.0
        assert r == pytest.approx(90.0, abs=1e-12)

    def test_symmetric(self):
        A = se3_exp([1, 0, 0, 0.3, 0.1, 0])
        B = se3_exp([0, 1, 0, -0.1, 0.2, 0.4])
        np.testing.assert_allclose(pose_error(A, B), pose_error(B, A), rtol=1e-12)
