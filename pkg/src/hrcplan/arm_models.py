"""Kinematics of the 6-DOF manipulator and human-arm pose reconstruction.

Joint configurations are shape-(6,) float64 arrays of angles in radians.
The human arm is a two-segment chain (upper arm, forearm) described either
by joint positions or by the pair of unit bone direction vectors; the two
representations convert exactly into each other, which keeps segment
lengths consistent under any predicted pose.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .collision import Capsule
from .errors import DegenerateBone, JointLimitViolation, NonUnitBone

BONE_UNIT_TOL = 1e-6  # allowed deviation of a bone vector from unit norm
_DEGENERATE_SEGMENT = 1e-9  # m, below which a bone has no direction


def _as_array(v, shape, name):
    a = np.ascontiguousarray(v, dtype=np.float64)
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class RobotGeometry:
    """Denavit-Hartenberg table, joint limits, and link capsule radii.

    dh_rows: (6, 4) of (a [m], alpha [rad], d [m], theta_offset [rad]);
    joint_limits: (6, 2) of (lo, hi); link_radii: (6,) capsule radii;
    base_frame: (4, 4) rigid transform of the robot base.
    """

    dh_rows: np.ndarray
    joint_limits: np.ndarray
    link_radii: np.ndarray
    base_frame: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dh_rows", _as_array(self.dh_rows, (6, 4), "dh_rows"))
        object.__setattr__(self, "joint_limits",
                           _as_array(self.joint_limits, (6, 2), "joint_limits"))
        object.__setattr__(self, "link_radii",
                           _as_array(self.link_radii, (6,), "link_radii"))
        object.__setattr__(self, "base_frame",
                           _as_array(self.base_frame, (4, 4), "base_frame"))
        if np.any(self.link_radii <= 0.0):
            raise ValueError("link radii must be > 0")
        if np.any(self.joint_limits[:, 0] >= self.joint_limits[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")


@dataclass(frozen=True, eq=False)
class AnthropometricParams:
    """Arm segment lengths/radii and the fixed shoulder anchor point."""

    upper_arm_length: float
    forearm_length: float
    upper_arm_radius: float
    forearm_radius: float
    shoulder_anchor: np.ndarray

    def __post_init__(self):
        for name in ("upper_arm_length", "forearm_length",
                     "upper_arm_radius", "forearm_radius"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        object.__setattr__(self, "shoulder_anchor",
                           _as_array(self.shoulder_anchor, (3,), "shoulder_anchor"))

    @property
    def reach(self) -> float:
        return self.upper_arm_length + self.forearm_length


@dataclass(frozen=True, eq=False)
class ArmBonePose:
    """Unit direction vectors of the upper arm (phi1) and forearm (phi2)."""

    phi1: np.ndarray
    phi2: np.ndarray

    def __post_init__(self):
        phi1 = _as_array(self.phi1, (3,), "phi1")
        phi2 = _as_array(self.phi2, (3,), "phi2")
        for name, phi in (("phi1", phi1), ("phi2", phi2)):
            n = float(np.linalg.norm(phi))
            if abs(n - 1.0) > BONE_UNIT_TOL:
                raise NonUnitBone(f"{name} has norm {n}, expected 1")
        object.__setattr__(self, "phi1", phi1)
        object.__setattr__(self, "phi2", phi2)

    def as_vector(self) -> np.ndarray:
        """The pose as a flat 6-vector (phi1, phi2)."""
        return np.concatenate([self.phi1, self.phi2])


@dataclass(frozen=True, eq=False)
class ArmJointPositions:
    """World positions of the shoulder, elbow, and wrist."""

    shoulder: np.ndarray
    elbow: np.ndarray
    wrist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shoulder", _as_array(self.shoulder, (3,), "shoulder"))
        object.__setattr__(self, "elbow", _as_array(self.elbow, (3,), "elbow"))
        object.__setattr__(self, "wrist", _as_array(self.wrist, (3,), "wrist"))


def check_joint_limits(config, robot: RobotGeometry) -> np.ndarray:
    """Validate and return the configuration as a (6,) float64 array."""
    q = np.ascontiguousarray(config, dtype=np.float64).reshape(6)
    if np.any(q < robot.joint_limits[:, 0]) or np.any(q > robot.joint_limits[:, 1]):
        raise JointLimitViolation(f"configuration {q.tolist()} outside joint limits")
    return q


def forward_kinematics(config, robot: RobotGeometry) -> np.ndarray:
    """All 7 joint-frame origins (base through end-effector) as (7, 3).

    Row i is the translation of the cumulative transform of the first i DH
    rows applied to the base frame.
    """
    q = check_joint_limits(config, robot)
    return np.asarray(_kernels.fk_origins(q, robot.dh_rows, robot.base_frame))


def robot_link_capsules(config, robot: RobotGeometry) -> list:
    """Capsule i spans joint-frame origins i..i+1 with radius link_radii[i]."""
    origins = forward_kinematics(config, robot)
    return [Capsule(origins[i], origins[i + 1], robot.link_radii[i])
            for i in range(6)]


def reconstruct_arm(pose: ArmBonePose, p_h: AnthropometricParams) -> ArmJointPositions:
    """Joint positions implied by bone directions and segment lengths."""
    for name, phi in (("phi1", pose.phi1), ("phi2", pose.phi2)):
        n = float(np.linalg.norm(phi))
        if abs(n - 1.0) > BONE_UNIT_TOL:
            raise NonUnitBone(f"{name} has norm {n}, expected 1")
    shoulder = p_h.shoulder_anchor.copy()
    elbow = shoulder + p_h.upper_arm_length * pose.phi1
    wrist = elbow + p_h.forearm_length * pose.phi2
    return ArmJointPositions(shoulder=shoulder, elbow=elbow, wrist=wrist)


def normalize_bone_vectors(joints: ArmJointPositions) -> ArmBonePose:
    """Unit bone directions recovered from joint positions."""
    upper = joints.elbow - joints.shoulder
    fore = joints.wrist - joints.elbow
    n1 = float(np.linalg.norm(upper))
    n2 = float(np.linalg.norm(fore))
    if n1 < _DEGENERATE_SEGMENT or n2 < _DEGENERATE_SEGMENT:
        raise DegenerateBone(f"segment lengths ({n1}, {n2}) too short to normalize")
    return ArmBonePose(phi1=upper / n1, phi2=fore / n2)


def arm_capsules(joints: ArmJointPositions, p_h: AnthropometricParams,
                 safety_margin: float = 0.0) -> list:
    """Collision capsules of the two arm segments, radius inflated by the
    safety margin so detected collisions precede physical contact."""
    if safety_margin < 0.0:
        raise ValueError(f"safety margin must be >= 0, got {safety_margin}")
    return [
        Capsule(joints.shoulder, joints.elbow, p_h.upper_arm_radius + safety_margin),
        Capsule(joints.elbow, joints.wrist, p_h.forearm_radius + safety_margin),
    ]


def default_robot_geometry() -> RobotGeometry:
    """Tabletop 6-DOF arm with roughly 0.9 m reach, +-pi joint limits.

    The DH table follows the common elbow-manipulator pattern (shoulder
    offset, two long links, spherical-ish wrist); scene files may override
    every field.
    """
    dh_rows = np.array([
        [0.0, np.pi / 2, 0.1625, 0.0],
        [-0.425, 0.0, 0.0, 0.0],
        [-0.392, 0.0, 0.0, 0.0],
        [0.0, np.pi / 2, 0.133, 0.0],
        [0.0, -np.pi / 2, 0.0997, 0.0],
        [0.0, 0.0, 0.0996, 0.0],
    ])
    limits = np.array([[-np.pi, np.pi]] * 6)
    radii = np.array([0.06, 0.05, 0.045, 0.04, 0.04, 0.035])
    return RobotGeometry(dh_rows=dh_rows, joint_limits=limits,
                         link_radii=radii, base_frame=np.eye(4))


def default_anthropometrics() -> AnthropometricParams:
    """Average adult arm segments; shoulder placed across the workbench."""
    return AnthropometricParams(
        upper_arm_length=0.30,
        forearm_length=0.25,
        upper_arm_radius=0.05,
        forearm_radius=0.045,
        shoulder_anchor=np.array([0.0, 0.70, 0.40]),
    )
