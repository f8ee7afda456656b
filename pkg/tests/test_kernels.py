import numpy as np
import pytest

from hrcplan import _kernels
from hrcplan.collision import Scene, Box, Capsule


needs_both = pytest.mark.skipif(
    "compiled" not in _kernels.available_backends(),
    reason="compiled kernels not built")


@pytest.fixture(scope="module")
def backends():
    return (_kernels.get_backend("compiled"), _kernels.get_backend("python"))


@needs_both
def test_fk_backend_parity(backends, robot):
    fast, ref = backends
    rng = np.random.default_rng(1)
    for _ in range(300):
        q = rng.uniform(-np.pi, np.pi, 6)
        a = np.asarray(fast.fk_origins(q, robot.dh_rows, robot.base_frame))
        b = np.asarray(ref.fk_origins(q, robot.dh_rows, robot.base_frame))
        assert np.max(np.abs(a - b)) < 1e-12


@needs_both
def test_distance_backend_parity(backends):
    fast, ref = backends
    rng = np.random.default_rng(2)
    for _ in range(500):
        a0, a1, b0, b1 = rng.uniform(-1, 1, (4, 3))
        assert fast.seg_seg_distance(a0, a1, b0, b1) == pytest.approx(
            ref.seg_seg_distance(a0, a1, b0, b1), abs=1e-12)
        lo = rng.uniform(-1, 0, 3)
        hi = lo + rng.uniform(0.1, 1, 3)
        assert fast.seg_box_distance(a0, a1, lo, hi) == pytest.approx(
            ref.seg_box_distance(a0, a1, lo, hi), abs=1e-12)


@needs_both
def test_collision_backend_parity(backends, robot, nonadjacent_pairs):
    fast, ref = backends
    scene = Scene(robot=robot,
                  static_boxes=(Box([-0.5, 0.2, 0.0], [-0.2, 0.6, 0.3]),
                                Box([0.2, 0.2, 0.0], [0.5, 0.6, 0.3])),
                  human_capsules=(Capsule([0.0, 0.6, 0.4], [0.1, 0.4, 0.1], 0.1),),
                  self_collision_pairs=nonadjacent_pairs)
    boxes, caps, pairs = scene._packed
    rng = np.random.default_rng(3)
    disagreements = 0
    for _ in range(400):
        q = rng.uniform(-np.pi, np.pi, 6)
        a = fast.config_collision(q, robot.dh_rows, robot.base_frame,
                                  robot.link_radii, boxes, caps, pairs)
        b = ref.config_collision(q, robot.dh_rows, robot.base_frame,
                                 robot.link_radii, boxes, caps, pairs)
        disagreements += a != b
    assert disagreements == 0
    for _ in range(100):
        qa = rng.uniform(-np.pi, np.pi, 6)
        qb = rng.uniform(-np.pi, np.pi, 6)
        a = fast.edge_collision(qa, qb, 0.05, robot.dh_rows, robot.base_frame,
                                robot.link_radii, boxes, caps, pairs)
        b = ref.edge_collision(qa, qb, 0.05, robot.dh_rows, robot.base_frame,
                               robot.link_radii, boxes, caps, pairs)
        assert a == b


def test_env_override_selects_python_backend():
    import subprocess
    import sys
    out = subprocess.run(
        [sys.executable, "-c",
         "import hrcplan; print(hrcplan.KERNEL_BACKEND)"],
        capture_output=True, text=True,
        env={"HRCPLAN_PURE_GEOMETRY": "1", "PATH": "/usr/bin:/bin"})
    assert out.stdout.strip() == "python"


def test_active_backend_reported():
    assert _kernels.BACKEND in ("compiled", "python")
    assert "python" in _kernels.available_backends()
