import numpy as np
import pytest

from hrcplan.arm_models import (AnthropometricParams, ArmBonePose,
                                ArmJointPositions, arm_capsules,
                                forward_kinematics, normalize_bone_vectors,
                                reconstruct_arm, robot_link_capsules)
from hrcplan.errors import DegenerateBone, JointLimitViolation, NonUnitBone


# ---------------------------------------------------------------------------
# independent forward-kinematics oracle: assembles each DH matrix explicitly
# and multiplies with numpy, written before the production kernel


def dh_matrix(a, alpha, d, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_oracle(q, robot):
    T = robot.base_frame.copy()
    origins = [T[:3, 3].copy()]
    for i in range(6):
        a, alpha, d, off = robot.dh_rows[i]
        T = T @ dh_matrix(a, alpha, d, q[i] + off)
        origins.append(T[:3, 3].copy())
    return np.asarray(origins)


def test_fk_home_pose_matches_analytic_chain(robot):
    got = forward_kinematics(np.zeros(6), robot)
    want = fk_oracle(np.zeros(6), robot)
    assert np.allclose(got, want, atol=1e-12)
    # identity-angle composition: first origin is the base frame origin
    assert np.array_equal(got[0], robot.base_frame[:3, 3])


def test_fk_matches_independent_oracle_on_random_configs(robot):
    rng = np.random.default_rng(7)
    for _ in range(200):
        q = rng.uniform(-np.pi, np.pi, 6)
        got = forward_kinematics(q, robot)
        want = fk_oracle(q, robot)
        assert np.max(np.abs(got - want)) < 1e-10


def test_fk_is_deterministic(robot):
    q = np.array([0.3, -1.2, 0.8, 0.1, -0.4, 2.0])
    a = forward_kinematics(q, robot)
    b = forward_kinematics(q, robot)
    assert np.array_equal(a, b)


def test_fk_rejects_out_of_limit_config(robot):
    q = np.zeros(6)
    q[0] = robot.joint_limits[0, 1] + 0.1
    with pytest.raises(JointLimitViolation):
        forward_kinematics(q, robot)


def test_link_capsules_coincide_with_fk(robot):
    rng = np.random.default_rng(11)
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 6)
        origins = forward_kinematics(q, robot)
        caps = robot_link_capsules(q, robot)
        assert len(caps) == 6
        for i, c in enumerate(caps):
            assert np.max(np.abs(c.p0 - origins[i])) < 1e-12
            assert np.max(np.abs(c.p1 - origins[i + 1])) < 1e-12
            assert c.radius == robot.link_radii[i]


def test_zero_length_link_collapses_to_sphere(robot):
    # links with a = d = 0 have coincident origins; the capsule degenerates
    q = np.zeros(6)
    origins = forward_kinematics(q, robot)
    caps = robot_link_capsules(q, robot)
    for i, c in enumerate(caps):
        if np.allclose(origins[i], origins[i + 1]):
            assert np.array_equal(c.p0, c.p1)


def test_reconstruct_axis_aligned_example():
    p = AnthropometricParams(upper_arm_length=0.30, forearm_length=0.25,
                             upper_arm_radius=0.05, forearm_radius=0.045,
                             shoulder_anchor=np.array([0.0, 0.0, 1.0]))
    pose = ArmBonePose(phi1=np.array([0.0, 0.0, -1.0]),
                       phi2=np.array([1.0, 0.0, 0.0]))
    joints = reconstruct_arm(pose, p)
    assert np.allclose(joints.elbow, [0.0, 0.0, 0.7], atol=1e-15)
    assert np.allclose(joints.wrist, [0.25, 0.0, 0.7], atol=1e-15)


def test_reconstruct_preserves_bone_lengths(p_h):
    rng = np.random.default_rng(3)
    for _ in range(100):
        v1 = rng.normal(0, 1, 3)
        v2 = rng.normal(0, 1, 3)
        pose = ArmBonePose(phi1=v1 / np.linalg.norm(v1), phi2=v2 / np.linalg.norm(v2))
        joints = reconstruct_arm(pose, p_h)
        assert abs(np.linalg.norm(joints.elbow - joints.shoulder)
                   - p_h.upper_arm_length) < 1e-9
        assert abs(np.linalg.norm(joints.wrist - joints.elbow)
                   - p_h.forearm_length) < 1e-9


def test_reconstruct_normalize_round_trip(p_h):
    rng = np.random.default_rng(5)
    for _ in range(100):
        v1 = rng.normal(0, 1, 3)
        v2 = rng.normal(0, 1, 3)
        pose = ArmBonePose(phi1=v1 / np.linalg.norm(v1), phi2=v2 / np.linalg.norm(v2))
        back = normalize_bone_vectors(reconstruct_arm(pose, p_h))
        assert np.max(np.abs(back.phi1 - pose.phi1)) < 1e-12
        assert np.max(np.abs(back.phi2 - pose.phi2)) < 1e-12


def test_non_unit_bone_rejected():
    with pytest.raises(NonUnitBone):
        ArmBonePose(phi1=np.array([0.0, 0.0, -1.1]), phi2=np.array([1.0, 0.0, 0.0]))


def test_normalize_recovers_example_directions(p_h):
    joints = ArmJointPositions(shoulder=np.array([0.0, 0.0, 1.0]),
                               elbow=np.array([0.0, 0.0, 0.7]),
                               wrist=np.array([0.25, 0.0, 0.7]))
    pose = normalize_bone_vectors(joints)
    assert np.allclose(pose.phi1, [0.0, 0.0, -1.0], atol=1e-15)
    assert np.allclose(pose.phi2, [1.0, 0.0, 0.0], atol=1e-15)


def test_normalize_degenerate_segment_raises():
    joints = ArmJointPositions(shoulder=np.zeros(3), elbow=np.zeros(3),
                               wrist=np.array([0.2, 0.0, 0.0]))
    with pytest.raises(DegenerateBone):
        normalize_bone_vectors(joints)


def test_normalize_outputs_unit_norm_for_random_triples():
    rng = np.random.default_rng(13)
    for _ in range(100):
        pts = rng.normal(0, 1, (3, 3))
        joints = ArmJointPositions(shoulder=pts[0], elbow=pts[1], wrist=pts[2])
        pose = normalize_bone_vectors(joints)
        assert abs(np.linalg.norm(pose.phi1) - 1.0) < 1e-12
        assert abs(np.linalg.norm(pose.phi2) - 1.0) < 1e-12


def test_arm_capsule_margins(p_h):
    pose = ArmBonePose(phi1=np.array([0.0, 0.0, -1.0]),
                       phi2=np.array([1.0, 0.0, 0.0]))
    joints = reconstruct_arm(pose, p_h)
    caps0 = arm_capsules(joints, p_h, 0.0)
    assert caps0[0].radius == p_h.upper_arm_radius
    assert caps0[1].radius == p_h.forearm_radius
    caps = arm_capsules(joints, p_h, 0.05)
    assert caps[1].radius == pytest.approx(p_h.forearm_radius + 0.05)


def test_arm_capsule_containment_with_growing_margin(p_h):
    # sampled points of the smaller capsule lie inside the larger one
    pose = ArmBonePose(phi1=np.array([0.0, -0.6, -0.8]),
                       phi2=np.array([0.8, -0.6, 0.0]))
    joints = reconstruct_arm(pose, p_h)
    small = arm_capsules(joints, p_h, 0.02)
    big = arm_capsules(joints, p_h, 0.06)
    rng = np.random.default_rng(17)

    def seg_point_dist(p0, p1, x):
        d = p1 - p0
        denom = float(np.dot(d, d))
        t = 0.0 if denom == 0 else np.clip(np.dot(x - p0, d) / denom, 0.0, 1.0)
        return float(np.linalg.norm(x - (p0 + t * d)))

    for cs, cb in zip(small, big):
        for _ in range(200):
            t = rng.uniform(0, 1)
            axis = cs.p0 + t * (cs.p1 - cs.p0)
            dirn = rng.normal(0, 1, 3)
            dirn /= np.linalg.norm(dirn)
            x = axis + dirn * cs.radius * rng.uniform(0, 1)
            assert seg_point_dist(cb.p0, cb.p1, x) <= cb.radius + 1e-12
