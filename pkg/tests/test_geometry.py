import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from geom4d.errors import ConventionMismatch, DegenerateGeometry
from geom4d.geometry import (Convention, Pose, Quaternion, Sim3, Trajectory,
                             compose, inverse, rotation_geodesic_error, slerp,
                             umeyama_sim3)


def random_quaternion(rng) -> Quaternion:
    q = rng.normal(size=4)
    return Quaternion.from_array(q).normalized()


def random_pose(rng, convention=Convention.CAMERA_FROM_WORLD) -> Pose:
    return Pose(random_quaternion(rng), rng.normal(size=3), convention)


class TestQuaternion:
    def test_matrix_matches_scipy(self, rng):
        for _ in range(50):
            q = random_quaternion(rng)
            ref = ScipyRotation.from_quat([q.x, q.y, q.z, q.w]).as_matrix()
            assert np.allclose(q.matrix(), ref, atol=1e-12)

    def test_from_matrix_round_trip(self, rng):
        for _ in range(50):
            q = random_quaternion(rng)
            back = Quaternion.from_matrix(q.matrix())
            assert abs(abs(np.dot(back.array(), q.array())) - 1.0) < 1e-12

    def test_multiplication_matches_rotation_product(self, rng):
        for _ in range(20):
            a, b = random_quaternion(rng), random_quaternion(rng)
            assert np.allclose((a * b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


class TestCompose:
    def test_identity_left(self, rng):
        p = random_pose(rng)
        out = compose(Pose.identity(), p)
        assert np.allclose(out.matrix(), p.matrix(), atol=1e-15)

    def test_pose_times_inverse_is_identity(self, rng):
        # inverse() flips the convention tag, so the identity check runs on
        # the matrix product and on an explicitly retagged compose.
        for _ in range(20):
            p = random_pose(rng)
            assert np.allclose(p.matrix() @ inverse(p).matrix(), np.eye(4), atol=1e-9)
            out = compose(p, inverse(p).retagged(p.convention))
            assert np.allclose(out.matrix(), np.eye(4), atol=1e-9)

    def test_matches_matrix_product_oracle(self, rng):
        for _ in range(50):
            a, b = random_pose(rng), random_pose(rng)
            out = compose(a, b)
            assert np.allclose(out.matrix(), a.matrix() @ b.matrix(), atol=1e-12)

    def test_convention_mismatch_rejected(self, rng):
        a = random_pose(rng, Convention.CAMERA_FROM_WORLD)
        b = random_pose(rng, Convention.WORLD_FROM_CAMERA)
        with pytest.raises(ConventionMismatch):
            compose(a, b)

    def test_associativity(self, rng):
        for _ in range(30):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            assert np.allclose(left.matrix(), right.matrix(), atol=1e-10)


class TestInverse:
    def test_identity(self):
        out = inverse(Pose.identity())
        assert np.allclose(out.matrix(), np.eye(4), atol=1e-15)
        assert out.convention is Convention.WORLD_FROM_CAMERA

    def test_pure_translation(self):
        p = Pose(Quaternion.identity(), [1.0, 2.0, 3.0])
        assert np.allclose(inverse(p).translation, [-1.0, -2.0, -3.0])

    def test_matches_matrix_inverse_oracle(self, rng):
        for _ in range(50):
            p = random_pose(rng)
            assert np.allclose(inverse(p).matrix(), np.linalg.inv(p.matrix()),
                               atol=1e-12)

    def test_convention_flips(self, rng):
        p = random_pose(rng, Convention.WORLD_FROM_CAMERA)
        assert inverse(p).convention is Convention.CAMERA_FROM_WORLD


class TestSlerp:
    def test_equal_endpoints(self, rng):
        q = random_quaternion(rng)
        for t in (0.0, 0.3, 1.0):
            out = slerp(q, q, t)
            assert abs(abs(np.dot(out.array(), q.array())) - 1.0) < 1e-12

    def test_endpoint_values(self, rng):
        q0, q1 = random_quaternion(rng), random_quaternion(rng)
        assert rotation_geodesic_error(slerp(q0, q1, 0.0), q0) < 1e-12
        assert rotation_geodesic_error(slerp(q0, q1, 1.0), q1) < 1e-12

    def test_bisection_of_right_angle(self):
        q0 = Quaternion.identity()
        q1 = Quaternion.from_axis_angle([0, 0, 1], math.pi / 2)
        mid = slerp(q0, q1, 0.5)
        expected = Quaternion.from_axis_angle([0, 0, 1], math.pi / 4)
        assert rotation_geodesic_error(mid, expected) < 1e-12

    def test_antipodal_flip_takes_short_arc(self, rng):
        q0 = random_quaternion(rng)
        q1 = Quaternion.from_array(-q0.array())
        out = slerp(q0, q1, 0.5)
        assert rotation_geodesic_error(out, q0) < 1e-9

    def test_reversal_symmetry(self, rng):
        for _ in range(30):
            q0, q1 = random_quaternion(rng), random_quaternion(rng)
            t = rng.uniform()
            a = slerp(q0, q1, t)
            b = slerp(q1, q0, 1.0 - t)
            assert rotation_geodesic_error(a, b) < 1e-10

    def test_unit_output(self, rng):
        q0, q1 = random_quaternion(rng), random_quaternion(rng)
        assert abs(slerp(q0, q1, 0.37).norm() - 1.0) < 1e-12


def horn_similarity(src: np.ndarray, dst: np.ndarray):
    """Independent closed-form similarity via Horn's quaternion method."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    m = a.T @ b  # note: sum_i a_i b_i^T transposed pairings below
    sxx, sxy, sxz = m[0]
    syx, syy, syz = m[1]
    szx, szy, szz = m[2]
    n = np.array([
        [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
        [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
        [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
        [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
    ])
    vals, vecs = np.linalg.eigh(n)
    q = vecs[:, np.argmax(vals)]
    rot = Quaternion.from_array(q).matrix()
    scale = float(np.sum(b * (a @ rot.T))) / float(np.sum(a * a))
    trans = mu_d - scale * rot @ mu_s
    return scale, rot, trans


def similarity_residual(src, dst, scale, rot, trans) -> float:
    pred = scale * src @ rot.T + trans
    return float(np.sum((dst - pred) ** 2))


class TestUmeyama:
    def test_identity_case(self, rng):
        src = rng.normal(size=(10, 3))
        sim = umeyama_sim3(src, src)
        assert abs(sim.scale - 1.0) < 1e-12
        assert rotation_geodesic_error(sim.rotation, Quaternion.identity()) < 1e-9
        assert np.allclose(sim.translation, 0, atol=1e-12)

    def test_exact_similarity(self, rng):
        src = rng.normal(size=(12, 3))
        dst = 2.0 * src + np.array([1.0, 0.0, 0.0])
        sim = umeyama_sim3(src, dst)
        assert abs(sim.scale - 2.0) < 1e-12
        assert rotation_geodesic_error(sim.rotation, Quaternion.identity()) < 1e-9
        assert np.allclose(sim.translation, [1.0, 0.0, 0.0], atol=1e-10)

    def test_noisy_cloud_matches_horn_oracle(self, rng):
        for _ in range(20):
            src = rng.normal(size=(30, 3))
            q = random_quaternion(rng)
            dst = 1.7 * src @ q.matrix().T + rng.normal(size=3) \
                + 0.05 * rng.normal(size=(30, 3))
            sim = umeyama_sim3(src, dst)
            ours = similarity_residual(src, dst, sim.scale,
                                       sim.rotation.matrix(), sim.translation)
            s_o, r_o, t_o = horn_similarity(src, dst)
            oracle = similarity_residual(src, dst, s_o, r_o, t_o)
            assert abs(ours - oracle) < 1e-9 * max(1.0, oracle)

    def test_relabeling_invariance(self, rng):
        src = rng.normal(size=(15, 3))
        q = random_quaternion(rng)
        dst = 0.8 * src @ q.matrix().T + rng.normal(size=3)
        perm = rng.permutation(15)
        a = umeyama_sim3(src, dst)
        b = umeyama_sim3(src[perm], dst[perm])
        assert abs(a.scale - b.scale) < 1e-12
        assert rotation_geodesic_error(a.rotation, b.rotation) < 1e-12
        assert np.allclose(a.translation, b.translation, atol=1e-12)

    def test_reflection_repaired_to_proper_rotation(self, rng):
        src = rng.normal(size=(20, 3))
        dst = src.copy()
        dst[:, 2] *= -1.0  # mirrored cloud would invite det(R) = -1
        sim = umeyama_sim3(src, dst)
        assert np.linalg.det(sim.rotation.matrix()) > 0

    def test_degenerate_too_few_points(self):
        with pytest.raises(DegenerateGeometry):
            umeyama_sim3(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_degenerate_collinear(self):
        src = np.outer(np.arange(5.0), [1.0, 2.0, 0.5])
        with pytest.raises(DegenerateGeometry):
            umeyama_sim3(src, src + 1.0)


class TestGeodesicError:
    def test_zero_for_equal(self, rng):
        q = random_quaternion(rng)
        assert rotation_geodesic_error(q, q) < 1e-12

    def test_zero_for_negated(self, rng):
        q = random_quaternion(rng)
        neg = Quaternion.from_array(-q.array())
        assert rotation_geodesic_error(q, neg) < 1e-12

    def test_known_angle(self):
        q0 = Quaternion.identity()
        q1 = Quaternion.from_axis_angle([1, 0, 0], math.pi / 6)
        assert abs(rotation_geodesic_error(q0, q1) - math.pi / 6) < 1e-12

    def test_symmetry_and_range(self, rng):
        for _ in range(30):
            a, b = random_quaternion(rng), random_quaternion(rng)
            e1 = rotation_geodesic_error(a, b)
            e2 = rotation_geodesic_error(b, a)
            assert abs(e1 - e2) < 1e-12
            assert 0.0 <= e1 <= math.pi + 1e-12

    def test_triangle_inequality(self, rng):
        for _ in range(50):
            a, b, c = (random_quaternion(rng) for _ in range(3))
            ab = rotation_geodesic_error(a, b)
            bc = rotation_geodesic_error(b, c)
            ac = rotation_geodesic_error(a, c)
            assert ac <= ab + bc + 1e-9


class TestTrajectory:
    def test_requires_increasing_timestamps(self, rng):
        poses = [random_pose(rng), random_pose(rng)]
        with pytest.raises(ValueError):
            Trajectory(np.array([1.0, 1.0]), poses)

    def test_requires_single_convention(self, rng):
        poses = [random_pose(rng, Convention.CAMERA_FROM_WORLD),
                 random_pose(rng, Convention.WORLD_FROM_CAMERA)]
        with pytest.raises(ConventionMismatch):
            Trajectory(np.array([0.0, 1.0]), poses)

    def test_centers_match_across_conventions(self, rng):
        poses_wc = [random_pose(rng, Convention.WORLD_FROM_CAMERA) for _ in range(4)]
        traj = Trajectory(np.arange(4.0), poses_wc)
        traj_cw = Trajectory(np.arange(4.0), [inverse(p) for p in poses_wc])
        assert np.allclose(traj.centers(), traj_cw.centers(), atol=1e-12)


class TestSim3:
    def test_apply_matches_direct_formula(self, rng):
        sim = Sim3(1.5, random_quaternion(rng), rng.normal(size=3))
        pts = rng.normal(size=(8, 3))
        expected = 1.5 * pts @ sim.rotation.matrix().T + sim.translation
        assert np.allclose(sim.apply(pts), expected, atol=1e-12)

    def test_rejects_nonpositive_scale(self, rng):
        with pytest.raises(DegenerateGeometry):
            Sim3(0.0, random_quaternion(rng), np.zeros(3))
