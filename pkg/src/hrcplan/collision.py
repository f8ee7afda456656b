"""Collision primitives and scene queries.

Capsules carry the robot links and the human arm; axis-aligned boxes carry
static workspace clutter. Collision is a strict inequality on distance, so
exact tangency counts as free. The hot loops live in the kernel backend
(compiled when available, pure Python otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import _kernels
from .errors import JointLimitViolation

if TYPE_CHECKING:
    from .arm_models import RobotGeometry

DEFAULT_EDGE_STEP = 0.05  # rad, max-norm spacing of interpolated edge checks


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    return a


@dataclass(frozen=True, eq=False)
class Capsule:
    """Segment p0-p1 swept by a sphere of the given radius."""

    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "p0", _as_vec3(self.p0))
        object.__setattr__(self, "p1", _as_vec3(self.p1))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0.0:
            raise ValueError(f"capsule radius must be > 0, got {self.radius}")


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box spanning [min_corner, max_corner]."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _as_vec3(self.min_corner))
        object.__setattr__(self, "max_corner", _as_vec3(self.max_corner))
        if np.any(self.min_corner > self.max_corner):
            raise ValueError("box min_corner must be <= max_corner componentwise")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min_corner + self.max_corner)

    @property
    def half_extents(self) -> np.ndarray:
        return 0.5 * (self.max_corner - self.min_corner)


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable collision world for one planning query.

    `human_capsules` may be empty (planning without a human); when motion
    prediction is active it holds the capsules of every predicted arm pose
    in addition to the currently observed one.
    """

    robot: "RobotGeometry"
    static_boxes: tuple = ()
    human_capsules: tuple = ()
    self_collision_pairs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "static_boxes", tuple(self.static_boxes))
        object.__setattr__(self, "human_capsules", tuple(self.human_capsules))
        object.__setattr__(
            self,
            "self_collision_pairs",
            tuple((int(i), int(j)) for i, j in self.self_collision_pairs),
        )

    @cached_property
    def _packed(self):
        boxes = np.empty((len(self.static_boxes), 6), dtype=np.float64)
        for i, b in enumerate(self.static_boxes):
            boxes[i, :3] = b.min_corner
            boxes[i, 3:] = b.max_corner
        caps = _pack_capsules(self.human_capsules)
        pairs = np.array(self.self_collision_pairs, dtype=np.int64).reshape(-1, 2)
        return boxes, caps, pairs

    def with_human_capsules(self, capsules: Sequence[Capsule]) -> "Scene":
        """Same static world with a different set of human capsules."""
        return Scene(
            robot=self.robot,
            static_boxes=self.static_boxes,
            human_capsules=tuple(capsules),
            self_collision_pairs=self.self_collision_pairs,
        )


def _pack_capsules(capsules: Sequence[Capsule]) -> np.ndarray:
    caps = np.empty((len(capsules), 7), dtype=np.float64)
    for i, c in enumerate(capsules):
        caps[i, 0:3] = c.p0
        caps[i, 3:6] = c.p1
        caps[i, 6] = c.radius
    return caps


def segment_segment_distance(a0, a1, b0, b1) -> float:
    """Exact minimum distance between closed segments a0-a1 and b0-b1."""
    return float(_kernels.seg_seg_distance(_as_vec3(a0), _as_vec3(a1),
                                           _as_vec3(b0), _as_vec3(b1)))


def capsules_collide(a: Capsule, b: Capsule) -> bool:
    """True iff the capsules overlap (tangency is not a collision)."""
    return segment_segment_distance(a.p0, a.p1, b.p0, b.p1) < a.radius + b.radius


def capsule_box_collide(c: Capsule, b: Box) -> bool:
    """True iff the capsule axis comes closer to the box than its radius."""
    d = _kernels.seg_box_distance(c.p0, c.p1, b.min_corner, b.max_corner)
    return float(d) < c.radius


def _check_limits(q: np.ndarray, robot: "RobotGeometry") -> None:
    limits = robot.joint_limits
    if np.any(q < limits[:, 0]) or np.any(q > limits[:, 1]):
        raise JointLimitViolation(f"configuration {q.tolist()} outside joint limits")


def config_in_collision(config, scene: Scene) -> bool:
    """True iff any robot link capsule at `config` intersects the scene."""
    q = np.ascontiguousarray(config, dtype=np.float64).reshape(6)
    _check_limits(q, scene.robot)
    boxes, caps, pairs = scene._packed
    r = scene.robot
    return bool(_kernels.config_collision(q, r.dh_rows, r.base_frame,
                                          r.link_radii, boxes, caps, pairs))


def edge_in_collision(c_a, c_b, scene: Scene, step: float = DEFAULT_EDGE_STEP) -> bool:
    """True iff any joint-space interpolation of the edge collides.

    Configs are spaced at most `step` apart in max-norm; both endpoints are
    included. The sample count is rounded up to a power of two so that
    halving `step` re-checks a superset of configurations.
    """
    if step <= 0.0:
        raise ValueError(f"edge step must be > 0, got {step}")
    qa = np.ascontiguousarray(c_a, dtype=np.float64).reshape(6)
    qb = np.ascontiguousarray(c_b, dtype=np.float64).reshape(6)
    _check_limits(qa, scene.robot)
    _check_limits(qb, scene.robot)
    boxes, caps, pairs = scene._packed
    r = scene.robot
    return bool(_kernels.edge_collision(qa, qb, float(step), r.dh_rows,
                                        r.base_frame, r.link_radii,
                                        boxes, caps, pairs))
