import numpy as np
import pytest

from hrcplan.arm_models import arm_capsules, reconstruct_arm, ArmBonePose
from hrcplan.collision import Capsule, Scene, config_in_collision
from hrcplan.gnn_planner import (PlanOptions, PlannerHyper, _backward_batch,
                                 _forward_batch, gnn_forward, init_gnn_weights,
                                 plan_bidirectional, plan_step, planner_loss,
                                 prep_planner_dataset, replan_trigger,
                                 train_planner)
from hrcplan.oracle_planners import (ExpertPath, Path, generate_expert_dataset,
                                     resample_path)
from hrcplan.workspace_graph import (GraphSchema, WorkspaceGraph,
                                     normalized_adjacency)

from conftest import max_grad_error, sample_free


def random_graph(rng, T=8, F=4, schema=None):
    H = rng.normal(0, 1, (T, F))
    A = np.zeros((T, T))
    for _ in range(2 * T):
        i, j = rng.integers(0, T, 2)
        if i != j:
            A[i, j] = A[j, i] = 1.0
    return WorkspaceGraph(H=H, A=A, schema=schema or GraphSchema())


# ---------------------------------------------------------------------------
# forward pass


def test_zero_weights_zero_output():
    w = init_gnn_weights(feature_width=4, hidden=5, layers=3, seed=0)
    for p in w.param_list():
        p[...] = 0.0
    g = random_graph(np.random.default_rng(0))
    assert np.array_equal(gnn_forward(g, w), np.zeros(6))


def test_permutation_invariance_of_forward():
    rng = np.random.default_rng(1)
    w = init_gnn_weights(feature_width=4, hidden=8, layers=5, seed=2)
    for _ in range(20):
        g = random_graph(rng, T=12)
        P = rng.permutation(12)
        gp = WorkspaceGraph(H=g.H[P], A=g.A[np.ix_(P, P)], schema=g.schema)
        assert np.max(np.abs(gnn_forward(g, w) - gnn_forward(gp, w))) < 1e-12


def test_single_layer_hand_evaluation():
    # hand-computed ReLU(A_hat H Theta + b), sum pooling, linear head
    rng = np.random.default_rng(3)
    w = init_gnn_weights(feature_width=6, hidden=2, layers=1, output_size=6, seed=4)
    H = rng.normal(0, 1, (3, 6))
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    g = WorkspaceGraph(H=H, A=A, schema=GraphSchema())
    Ahat = normalized_adjacency(A)
    z = Ahat @ H @ w.thetas[0] + w.biases[0]
    pooled = np.maximum(z, 0.0).sum(axis=0)
    want = pooled @ w.head_W + w.head_b
    assert np.max(np.abs(gnn_forward(g, w) - want)) < 1e-12


# ---------------------------------------------------------------------------
# loss


def make_step_graph(label_err, schema):
    T = 3
    H = np.zeros((T, 6))
    A = np.zeros((T, T))
    g = WorkspaceGraph(H=H, A=A, schema=schema)
    # zero graph with zero weights gives zero output; the label sets the error
    label = np.full(6, 0.0)
    label[0] = label_err * schema.angle_scale
    return g, label


def test_loss_zero_on_perfect_imitation():
    schema = GraphSchema()
    w = init_gnn_weights(seed=0)
    for p in w.param_list():
        p[...] = 0.0
    g, _ = make_step_graph(0.0, schema)
    assert planner_loss([[(g, np.zeros(6))]], w) == 0.0


def test_loss_single_step_hand_value():
    schema = GraphSchema()
    w = init_gnn_weights(seed=0)
    for p in w.param_list():
        p[...] = 0.0
    g, label = make_step_graph(0.5, schema)
    # one path, one step, single-dimension error 0.5 -> 0.25
    assert planner_loss([[(g, label)]], w) == pytest.approx(0.25)


def test_loss_batches_average_per_path():
    schema = GraphSchema()
    w = init_gnn_weights(seed=0)
    for p in w.param_list():
        p[...] = 0.0
    g1, l1 = make_step_graph(0.5, schema)
    g2, l2 = make_step_graph(1.0, schema)
    s1 = planner_loss([[(g1, l1), (g1, l1)]], w)   # per-path sum 0.5
    s2 = planner_loss([[(g2, l2)]], w)             # per-path sum 1.0
    both = planner_loss([[(g1, l1), (g1, l1)], [(g2, l2)]], w)
    assert both == pytest.approx((s1 + s2) / 2)


# ---------------------------------------------------------------------------
# gradients and training


def test_gnn_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    worst = 0.0
    for trial in range(5):
        w = init_gnn_weights(feature_width=4, hidden=8, layers=3,
                             output_size=3, seed=trial)
        B, T = 2, 5
        H = rng.normal(0, 1, (B, T, 4))
        A = np.zeros((T, T))
        for _ in range(8):
            i, j = rng.integers(0, T, 2)
            if i != j:
                A[i, j] = A[j, i] = 1.0
        Ahat = np.broadcast_to(normalized_adjacency(A), (B, T, T)).copy()
        Y = rng.normal(0, 1, (B, 3))

        def loss_fn():
            out, _ = _forward_batch(H, Ahat, w, want_cache=False)
            err = out - Y
            return float(np.mean(np.sum(err * err, axis=1)))

        out, cache = _forward_batch(H, Ahat, w, want_cache=True)
        grads = _backward_batch((2.0 / B) * (out - Y), Ahat, w, cache)
        worst = max(worst, max_grad_error(grads, w.param_list(), loss_fn))
    assert worst < 1e-5


def test_overfit_ten_pair_dataset(boxed_scene):
    # capacity sanity check: memorize 10 one-step demonstrations; the
    # dataset is doubled so the validation split holds copies of trained paths
    schema = GraphSchema()
    rng = np.random.default_rng(6)
    paths = []
    for pid in range(10):
        q = sample_free(boxed_scene, rng)
        nxt = q + rng.uniform(-0.1, 0.1, 6)
        paths.append(ExpertPath(scene_id="s", goal=nxt,
                                configs=np.asarray([q, nxt]), human=None,
                                path_id=pid))
    prepped = prep_planner_dataset(paths, {"s": boxed_scene}, schema,
                                   boxed_scene.robot, both_directions=False)
    assert sum(len(p.labels) for p in prepped) == 10
    hyper = PlannerHyper(lr=5e-3, batch=20, epochs=600, seed=0,
                         hidden=32, layers=2, val_fraction=0.5,
                         pair_cap_per_epoch=0)
    w, history = train_planner(prepped + prepped, hyper)
    assert min(h["val_loss"] for h in history) < 1e-4


def test_training_deterministic(boxed_scene):
    schema = GraphSchema()
    rng = np.random.default_rng(7)
    paths = []
    for pid in range(3):
        qs = np.cumsum(rng.uniform(-0.05, 0.05, (4, 6)), axis=0)
        paths.append(ExpertPath(scene_id="s", goal=qs[-1], configs=qs,
                                human=None, path_id=pid))
    prepped = prep_planner_dataset(paths, {"s": boxed_scene}, schema,
                                   boxed_scene.robot)
    hyper = PlannerHyper(lr=1e-3, batch=4, epochs=3, seed=9, hidden=8,
                         layers=2, val_fraction=0.3, pair_cap_per_epoch=0)
    w1, h1 = train_planner(prepped, hyper)
    w2, h2 = train_planner(prepped, hyper)
    for a, b in zip(w1.param_list(), w2.param_list()):
        assert np.array_equal(a, b)
    assert h1 == h2


# ---------------------------------------------------------------------------
# plan_step clamps


def test_plan_step_respects_max_step(boxed_scene):
    schema = GraphSchema()
    w = init_gnn_weights(seed=3)  # untrained: raw output is arbitrary
    rng = np.random.default_rng(8)
    for _ in range(20):
        c = sample_free(boxed_scene, rng)
        g = sample_free(boxed_scene, rng)
        step = plan_step(c, g, boxed_scene, None, w, schema, boxed_scene.robot,
                         max_step=0.1)
        assert np.max(np.abs(step.candidate - c)) <= 0.1 + 1e-12
        limits = boxed_scene.robot.joint_limits
        assert np.all(step.candidate >= limits[:, 0])
        assert np.all(step.candidate <= limits[:, 1])


def test_plan_step_clamps_at_goal(boxed_scene):
    schema = GraphSchema()
    w = init_gnn_weights(seed=4)
    rng = np.random.default_rng(9)
    c = sample_free(boxed_scene, rng)
    step = plan_step(c, c, boxed_scene, None, w, schema, boxed_scene.robot,
                     max_step=0.1)
    assert np.max(np.abs(step.candidate - c)) <= 0.1 + 1e-12


def test_plan_step_limit_boundary(robot, empty_scene):
    schema = GraphSchema()
    w = init_gnn_weights(seed=5)
    # force a huge raw output through the head bias
    w.head_b[...] = 100.0
    q = np.zeros(6)
    step = plan_step(q, q, empty_scene, None, w, schema, robot, max_step=10.0)
    limits = empty_scene.robot.joint_limits
    assert np.all(step.candidate <= limits[:, 1] + 1e-12)


# ---------------------------------------------------------------------------
# bidirectional planning (trained net comes from a tiny expert run)


@pytest.fixture(scope="module")
def trained_small(boxed_scene):
    schema = GraphSchema()
    experts = generate_expert_dataset([("ws", boxed_scene)], 25, seed=21,
                                      iteration_budget=900)
    prepped = prep_planner_dataset(experts, {"ws": boxed_scene}, schema,
                                   boxed_scene.robot)
    w, _ = train_planner(prepped, PlannerHyper(epochs=10, seed=1,
                                               pair_cap_per_epoch=5000))
    return w, schema


def test_bidirectional_trivial_request(boxed_scene, trained_small):
    w, schema = trained_small
    rng = np.random.default_rng(10)
    q = sample_free(boxed_scene, rng)
    path, stats = plan_bidirectional(q, q, boxed_scene, w, schema,
                                     PlanOptions(seed=0))
    assert stats.success
    assert len(path) >= 1
    assert np.max(np.abs(path.configs[0] - q)) < 1e-12


def test_bidirectional_connects_free_straight_line(empty_scene, trained_small):
    w, schema = trained_small
    rng = np.random.default_rng(11)
    a = rng.uniform(-1.0, 1.0, 6)
    b = rng.uniform(-1.0, 1.0, 6)
    path, stats = plan_bidirectional(a, b, empty_scene, w, schema,
                                     PlanOptions(seed=1))
    assert stats.success
    # connection-first: start and goal joined by the straight interpolation
    assert stats.tree_size == 2
    assert np.max(np.abs(path.configs[-1] - b)) < 1e-12


def test_trained_step_decreases_goal_distance(empty_scene, trained_small):
    w, schema = trained_small
    rng = np.random.default_rng(12)
    better = 0
    for _ in range(100):
        c = rng.uniform(-np.pi, np.pi, 6)
        g = rng.uniform(-np.pi, np.pi, 6)
        st = plan_step(c, g, empty_scene, None, w, schema, empty_scene.robot)
        if np.linalg.norm(g - st.candidate) < np.linalg.norm(g - c):
            better += 1
    assert better >= 90


def test_bidirectional_paths_revalidate(boxed_scene, trained_small):
    w, schema = trained_small
    rng = np.random.default_rng(13)
    from hrcplan.collision import edge_in_collision
    successes = 0
    for s in range(50):
        start = sample_free(boxed_scene, rng)
        goal = sample_free(boxed_scene, rng)
        path, stats = plan_bidirectional(start, goal, boxed_scene, w, schema,
                                         PlanOptions(seed=s))
        if not stats.success:
            continue
        successes += 1
        for a, b in zip(path.configs[:-1], path.configs[1:]):
            assert not edge_in_collision(a, b, boxed_scene, step=0.05 / 4)
        assert np.max(np.abs(path.configs[0] - start)) < 1e-12
        assert np.max(np.abs(path.configs[-1] - goal)) < 1e-12
        assert np.max(np.abs(np.diff(path.configs, axis=0))) <= 0.1 + 1e-9
    assert successes >= 40


# ---------------------------------------------------------------------------
# replan trigger


def arm_scene(robot, joints, p_h, margin=0.0):
    return Scene(robot=robot, static_boxes=(),
                 human_capsules=arm_capsules(joints, p_h, margin),
                 self_collision_pairs=())


def test_trigger_false_without_human(boxed_scene):
    rng = np.random.default_rng(14)
    q = sample_free(boxed_scene, rng)
    path = resample_path(Path(configs=np.asarray([q, q + 0.3])), 0.1)
    scene = boxed_scene.with_human_capsules(())
    if not replan_trigger(path, scene):
        assert True
    # a path validated in the static scene stays valid there
    from hrcplan.collision import edge_in_collision
    if not any(edge_in_collision(a, b, scene, 0.05)
               for a, b in zip(path.configs[:-1], path.configs[1:])):
        assert not replan_trigger(path, scene)


def test_trigger_fires_on_future_pose_only(robot, p_h):
    # a predicted pose blocks a future edge while the current pose is clear
    from hrcplan.arm_models import forward_kinematics
    qa = np.zeros(6)
    qb = np.zeros(6)
    qb[0] = 1.2
    mid = np.zeros(6)
    mid[0] = 0.6
    ee = forward_kinematics(mid, robot)[6]
    blocker = Capsule(ee, ee + [0.0, 0.0, 0.01], 0.08)
    scene = Scene(robot=robot, static_boxes=(), human_capsules=(blocker,),
                  self_collision_pairs=())
    path = resample_path(Path(configs=np.asarray([qa, qb])), 0.1)
    assert not config_in_collision(qa, scene)
    assert replan_trigger(path, scene)


def test_trigger_superset_monotonicity(robot, p_h):
    # adding capsules never converts the trigger from true to false
    rng = np.random.default_rng(15)
    fired = 0
    for _ in range(250):
        qa = rng.uniform(-np.pi, np.pi, 6)
        qb = rng.uniform(-np.pi, np.pi, 6)
        path = resample_path(Path(configs=np.asarray([qa, qb])), 0.1)
        v1 = rng.normal(0, 1, 3)
        v2 = rng.normal(0, 1, 3)
        pose = ArmBonePose(phi1=v1 / np.linalg.norm(v1),
                           phi2=v2 / np.linalg.norm(v2))
        joints = reconstruct_arm(pose, p_h)
        mean_scene = arm_scene(robot, joints, p_h, margin=0.05)
        more = list(mean_scene.human_capsules)
        for k in range(4):
            v1 = rng.normal(0, 1, 3)
            v2 = rng.normal(0, 1, 3)
            pk = ArmBonePose(phi1=v1 / np.linalg.norm(v1),
                             phi2=v2 / np.linalg.norm(v2))
            more.extend(arm_capsules(reconstruct_arm(pk, p_h), p_h, 0.05))
        full_scene = mean_scene.with_human_capsules(more)
        if replan_trigger(path, mean_scene):
            fired += 1
            assert replan_trigger(path, full_scene)
    assert fired >= 10
