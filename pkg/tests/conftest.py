import numpy as np
import pytest

from hrcplan.arm_models import (default_anthropometrics, default_robot_geometry)
from hrcplan.collision import Box, Scene


@pytest.fixture(scope="session")
def robot():
    return default_robot_geometry()


@pytest.fixture(scope="session")
def p_h():
    return default_anthropometrics()


@pytest.fixture(scope="session")
def nonadjacent_pairs():
    return [(i, j) for i in range(6) for j in range(i + 2, 6)]


@pytest.fixture(scope="session")
def empty_scene(robot):
    return Scene(robot=robot, static_boxes=(), human_capsules=(),
                 self_collision_pairs=())


@pytest.fixture(scope="session")
def boxed_scene(robot, nonadjacent_pairs):
    boxes = [Box([-0.50, 0.30, 0.00], [-0.22, 0.58, 0.30]),
             Box([0.22, 0.30, 0.00], [0.50, 0.58, 0.32])]
    return Scene(robot=robot, static_boxes=boxes, human_capsules=(),
                 self_collision_pairs=nonadjacent_pairs)


def sample_free(scene, rng, n=1):
    """Rejection-sample collision-free configurations."""
    from hrcplan.collision import config_in_collision
    limits = scene.robot.joint_limits
    out = []
    while len(out) < n:
        q = rng.uniform(limits[:, 0], limits[:, 1])
        if not config_in_collision(q, scene):
            out.append(q)
    return out if n > 1 else out[0]


def max_grad_error(analytic, params, loss_fn, h=1e-5):
    """Worst gradient error against central finite differences.

    Entries where both the analytic and numeric gradients are below 1e-4
    are compared absolutely (finite-difference roundoff would otherwise
    dominate); all other entries are compared relatively.
    """
    worst = 0.0
    for pi, p in enumerate(params):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            lp = loss_fn()
            p[idx] = orig - h
            lm = loss_fn()
            p[idx] = orig
            fd = (lp - lm) / (2 * h)
            g = analytic[pi][idx]
            scale = max(abs(fd), abs(g), 1e-4)
            worst = max(worst, abs(fd - g) / scale)
    return worst
