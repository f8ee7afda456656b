"""Workspace-to-graph conversion for the neural planner.

A planning snapshot becomes a fixed-size graph: 6 nodes for the robot's
current joints, 6 for its goal joints, 3 slots for static obstacles, and
K * horizons * 2 nodes for sampled future human arm joints (default
5 * 4 * 2 = 40, totalling 55). Each node carries 6 features: a normalized
position, one salient scalar (joint angle, box extent, or position-spread
of the prediction), a group code, and a presence flag. Absent objects keep
their structural in-group edges but lose connections to the robot, so the
node count never changes.
"""

from dataclasses import dataclass

import numpy as np

from .arm_models import (AnthropometricParams, RobotGeometry,
                         check_joint_limits, forward_kinematics)
from .collision import Scene
from .errors import SchemaMismatch
from .predictor import UncertainPrediction, prediction_to_poses

GROUP_ROBOT = 0.25
GROUP_GOAL = 0.5
GROUP_OBSTACLE = 0.75
GROUP_HUMAN = 1.0


@dataclass(frozen=True, eq=False)
class GraphSchema:
    """Node budget, horizon selection, and feature normalization scales."""

    n_robot: int = 6
    n_goal: int = 6
    n_obstacle: int = 3
    n_samples: int = 5
    horizons: tuple = (0, 16, 33, 49)
    n_arm_joints: int = 2
    feature_width: int = 6
    pos_scale: float = 1.2    # m, workspace radius used to normalize positions
    angle_scale: float = float(np.pi)
    sigma_scale: float = 0.1  # m, scale of the prediction-spread channel

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))

    @property
    def n_human(self) -> int:
        return self.n_samples * len(self.horizons) * self.n_arm_joints

    @property
    def total_nodes(self) -> int:
        return self.n_robot + self.n_goal + self.n_obstacle + self.n_human

    def human_node_index(self, k: int, h_idx: int, joint: int) -> int:
        base = self.n_robot + self.n_goal + self.n_obstacle
        per_sample = len(self.horizons) * self.n_arm_joints
        return base + k * per_sample + h_idx * self.n_arm_joints + joint

    def to_dict(self) -> dict:
        return {"n_robot": self.n_robot, "n_goal": self.n_goal,
                "n_obstacle": self.n_obstacle, "n_samples": self.n_samples,
                "horizons": list(self.horizons),
                "n_arm_joints": self.n_arm_joints,
                "feature_width": self.feature_width,
                "pos_scale": self.pos_scale, "angle_scale": self.angle_scale,
                "sigma_scale": self.sigma_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSchema":
        return cls(n_robot=d["n_robot"], n_goal=d["n_goal"],
                   n_obstacle=d["n_obstacle"], n_samples=d["n_samples"],
                   horizons=tuple(d["horizons"]),
                   n_arm_joints=d["n_arm_joints"],
                   feature_width=d["feature_width"],
                   pos_scale=d["pos_scale"], angle_scale=d["angle_scale"],
                   sigma_scale=d["sigma_scale"])


@dataclass(frozen=True, eq=False)
class WorkspaceGraph:
    """Feature matrix H (T x 6) and symmetric 0/1 adjacency A (T x T)."""

    H: np.ndarray
    A: np.ndarray
    schema: GraphSchema


@dataclass(frozen=True, eq=False)
class HumanNodeSet:
    """Sampled human joint positions and per-joint position spread.

    positions: (K, H, 2, 3) world positions (elbow, wrist) per sample and
    horizon; sigmas: (H, 2) standard-deviation scalars in meters.
    """

    positions: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions",
                           np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "sigmas",
                           np.asarray(self.sigmas, dtype=np.float64))


def human_nodes_from_prediction(pred: UncertainPrediction,
                                p_h: AnthropometricParams,
                                schema: GraphSchema) -> HumanNodeSet:
    """Reconstruct graph-ready joint positions and spreads from a prediction.

    The per-joint spread propagates the bone-vector variance through the
    segment lengths: elbow spread is l1 * sqrt(sum u_phi1); wrist adds the
    forearm term in quadrature.
    """
    if pred.n_samples != schema.n_samples:
        raise SchemaMismatch(
            f"prediction has K={pred.n_samples}, schema expects {schema.n_samples}")
    poses = prediction_to_poses(pred, p_h, schema.horizons)
    K = schema.n_samples
    H = len(schema.horizons)
    positions = np.empty((K, H, 2, 3))
    sigmas = np.empty((H, 2))
    l1, l2 = p_h.upper_arm_length, p_h.forearm_length
    for h_idx, h in enumerate(schema.horizons):
        u = pred.variance[h]
        s1 = float(np.sum(u[:3]))
        s2 = float(np.sum(u[3:]))
        sigmas[h_idx, 0] = l1 * np.sqrt(s1)
        sigmas[h_idx, 1] = np.sqrt(l1 * l1 * s1 + l2 * l2 * s2)
        for k in range(K):
            positions[k, h_idx, 0] = poses[h_idx][k].elbow
            positions[k, h_idx, 1] = poses[h_idx][k].wrist
    return HumanNodeSet(positions=positions, sigmas=sigmas)


def _structural_adjacency(schema: GraphSchema, n_boxes: int,
                          human_present: bool) -> np.ndarray:
    T = schema.total_nodes
    A = np.zeros((T, T))

    def link(i, j):
        A[i, j] = 1.0
        A[j, i] = 1.0

    for i in range(schema.n_robot - 1):          # serial chain, current
        link(i, i + 1)
    g0 = schema.n_robot
    for i in range(schema.n_goal - 1):           # serial chain, goal
        link(g0 + i, g0 + i + 1)
    for i in range(min(schema.n_robot, schema.n_goal)):
        link(i, g0 + i)                          # joint-i to joint-i
    b0 = schema.n_robot + schema.n_goal
    for b in range(n_boxes):                     # present obstacles -> robot
        for i in range(schema.n_robot):
            link(b0 + b, i)
    nh = len(schema.horizons)
    for k in range(schema.n_samples):            # arm-sample structure
        for h in range(nh):
            e = schema.human_node_index(k, h, 0)
            w_ = schema.human_node_index(k, h, 1)
            link(e, w_)
            if h + 1 < nh:
                link(e, schema.human_node_index(k, h + 1, 0))
                link(w_, schema.human_node_index(k, h + 1, 1))
            if human_present:
                for i in range(schema.n_robot):
                    link(e, i)
                    link(w_, i)
    return A


def build_graph(config, goal, scene: Scene, pred, schema: GraphSchema,
                robot: RobotGeometry, p_h: AnthropometricParams | None = None) -> WorkspaceGraph:
    """Assemble the planner input graph for one snapshot.

    `pred` may be None (no human: human nodes get presence 0 and zeroed
    positions), a HumanNodeSet, or an UncertainPrediction (then `p_h` is
    required to reconstruct joint positions).
    """
    q = check_joint_limits(config, robot)
    qg = check_joint_limits(goal, robot)
    if isinstance(pred, UncertainPrediction):
        if p_h is None:
            raise ValueError("reconstructing an UncertainPrediction needs p_h")
        pred = human_nodes_from_prediction(pred, p_h, schema)
    if len(scene.static_boxes) > schema.n_obstacle:
        raise SchemaMismatch(
            f"scene has {len(scene.static_boxes)} boxes, schema allows "
            f"{schema.n_obstacle}")

    T = schema.total_nodes
    H = np.zeros((T, schema.feature_width))
    fk_cur = forward_kinematics(q, robot)
    fk_goal = forward_kinematics(qg, robot)
    ps = schema.pos_scale
    for i in range(schema.n_robot):
        H[i, :3] = fk_cur[i + 1] / ps
        H[i, 3] = q[i] / schema.angle_scale
        H[i, 4] = GROUP_ROBOT
        H[i, 5] = 1.0
    g0 = schema.n_robot
    for i in range(schema.n_goal):
        H[g0 + i, :3] = fk_goal[i + 1] / ps
        H[g0 + i, 3] = qg[i] / schema.angle_scale
        H[g0 + i, 4] = GROUP_GOAL
        H[g0 + i, 5] = 1.0
    b0 = schema.n_robot + schema.n_goal
    for b in range(schema.n_obstacle):
        H[b0 + b, 4] = GROUP_OBSTACLE
        if b < len(scene.static_boxes):
            box = scene.static_boxes[b]
            H[b0 + b, :3] = box.center / ps
            H[b0 + b, 3] = float(np.max(box.half_extents)) / ps
            H[b0 + b, 5] = 1.0

    human_present = pred is not None
    if human_present:
        K = schema.n_samples
        nh = len(schema.horizons)
        if pred.positions.shape != (K, nh, schema.n_arm_joints, 3):
            raise SchemaMismatch(
                f"human positions {pred.positions.shape} do not match schema "
                f"{(K, nh, schema.n_arm_joints, 3)}")
        if pred.sigmas.shape != (nh, schema.n_arm_joints):
            raise SchemaMismatch("human sigma array does not match schema")
        for k in range(K):
            for h in range(nh):
                for j in range(schema.n_arm_joints):
                    idx = schema.human_node_index(k, h, j)
                    H[idx, :3] = pred.positions[k, h, j] / ps
                    H[idx, 3] = pred.sigmas[h, j] / schema.sigma_scale
                    H[idx, 4] = GROUP_HUMAN
                    H[idx, 5] = 1.0
    else:
        for k in range(schema.n_samples):
            for h in range(len(schema.horizons)):
                for j in range(schema.n_arm_joints):
                    H[schema.human_node_index(k, h, j), 4] = GROUP_HUMAN

    A = _structural_adjacency(schema, len(scene.static_boxes), human_present)
    return WorkspaceGraph(H=H, A=A, schema=schema)


def normalized_adjacency(A: np.ndarray) -> np.ndarray:
    """Symmetric degree-normalized propagation operator with self-loops.

    Returns D^(-1/2) (A + I) D^(-1/2) where D is the degree matrix of
    A + I. Isolated nodes reduce to a unit self-loop.
    """
    A = np.asarray(A, dtype=np.float64)
    T = A.shape[0]
    if A.shape != (T, T):
        raise SchemaMismatch(f"adjacency must be square, got {A.shape}")
    if np.any(np.abs(A - A.T) > 0.0):
        raise ValueError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0.0):
        raise ValueError("adjacency must have a zero diagonal")
    At = A + np.eye(T)
    d = At.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return At * inv_sqrt[:, None] * inv_sqrt[None, :]
