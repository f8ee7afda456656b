import numpy as np
import pytest

from hrcplan.errors import SchemaMismatch
from hrcplan.predictor import init_predictor_weights, predict_with_uncertainty
from hrcplan.workspace_graph import (GROUP_HUMAN, GraphSchema, HumanNodeSet,
                                     build_graph, human_nodes_from_prediction,
                                     normalized_adjacency)

from conftest import sample_free


@pytest.fixture(scope="module")
def schema():
    return GraphSchema()


def unit_window(rng, n=50):
    b = rng.normal(0, 1, (n, 2, 3))
    b /= np.linalg.norm(b, axis=2, keepdims=True)
    return b.reshape(n, 6)


@pytest.fixture(scope="module")
def node_set(schema, p_h):
    rng = np.random.default_rng(0)
    w = init_predictor_weights(hidden_sizes=(16, 16, 16), seed=1)
    pred = predict_with_uncertainty(unit_window(rng), w, K=schema.n_samples,
                                    p=0.1, seed=2)
    return human_nodes_from_prediction(pred, p_h, schema)


def test_default_schema_is_55_nodes(schema):
    assert schema.total_nodes == 55
    assert schema.n_human == 40


def test_graph_shapes_default(boxed_scene, schema, node_set):
    rng = np.random.default_rng(1)
    q = sample_free(boxed_scene, rng)
    g = sample_free(boxed_scene, rng)
    graph = build_graph(q, g, boxed_scene, node_set, schema, boxed_scene.robot)
    assert graph.H.shape == (55, 6)
    assert graph.A.shape == (55, 55)


def test_absent_human_convention(boxed_scene, schema):
    rng = np.random.default_rng(2)
    q = sample_free(boxed_scene, rng)
    g = sample_free(boxed_scene, rng)
    graph = build_graph(q, g, boxed_scene, None, schema, boxed_scene.robot)
    h0 = schema.n_robot + schema.n_goal + schema.n_obstacle
    human_rows = graph.H[h0:]
    assert np.all(human_rows[:, 5] == 0.0)  # presence off
    assert np.all(human_rows[:, :4] == 0.0)
    assert np.all(human_rows[:, 4] == GROUP_HUMAN)
    # absent nodes keep only in-group structural edges
    cross = graph.A[h0:, :h0]
    assert np.all(cross == 0.0)
    within = graph.A[h0:, h0:]
    assert within.sum() > 0  # sample chains remain


def test_present_human_connects_to_robot(boxed_scene, schema, node_set):
    rng = np.random.default_rng(3)
    q = sample_free(boxed_scene, rng)
    g = sample_free(boxed_scene, rng)
    graph = build_graph(q, g, boxed_scene, node_set, schema, boxed_scene.robot)
    h0 = schema.n_robot + schema.n_goal + schema.n_obstacle
    cross = graph.A[h0:, :schema.n_robot]
    assert np.all(cross == 1.0)


def test_adjacency_symmetric_zero_diagonal(boxed_scene, schema, node_set):
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = sample_free(boxed_scene, rng)
        g = sample_free(boxed_scene, rng)
        pred = node_set if rng.random() < 0.5 else None
        graph = build_graph(q, g, boxed_scene, pred, schema, boxed_scene.robot)
        assert np.array_equal(graph.A, graph.A.T)
        assert np.all(np.diag(graph.A) == 0.0)


def test_schema_mismatch_detected(boxed_scene, schema):
    rng = np.random.default_rng(5)
    q = sample_free(boxed_scene, rng)
    bad = HumanNodeSet(positions=np.zeros((3, 4, 2, 3)), sigmas=np.zeros((4, 2)))
    with pytest.raises(SchemaMismatch):
        build_graph(q, q, boxed_scene, bad, schema, boxed_scene.robot)


def test_feature_locality(boxed_scene, schema, node_set, p_h):
    # changing only the human prediction leaves other rows bitwise unchanged
    rng = np.random.default_rng(6)
    q = sample_free(boxed_scene, rng)
    g = sample_free(boxed_scene, rng)
    g1 = build_graph(q, g, boxed_scene, node_set, schema, boxed_scene.robot)
    other = HumanNodeSet(positions=node_set.positions + 0.05,
                         sigmas=node_set.sigmas * 2.0 + 0.01)
    g2 = build_graph(q, g, boxed_scene, other, schema, boxed_scene.robot)
    h0 = schema.n_robot + schema.n_goal + schema.n_obstacle
    assert np.array_equal(g1.H[:h0], g2.H[:h0])
    assert not np.array_equal(g1.H[h0:], g2.H[h0:])


# ---------------------------------------------------------------------------
# normalized adjacency


def test_single_node_self_loop():
    assert np.array_equal(normalized_adjacency(np.zeros((1, 1))), np.ones((1, 1)))


def test_two_nodes_one_edge():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(normalized_adjacency(A), 0.5 * np.ones((2, 2)), atol=1e-15)


def test_three_node_path_hand_values():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 1.0
    A[1, 2] = A[2, 1] = 1.0
    want = np.array([[1 / 2, 1 / np.sqrt(6), 0.0],
                     [1 / np.sqrt(6), 1 / 3, 1 / np.sqrt(6)],
                     [0.0, 1 / np.sqrt(6), 1 / 2]])
    assert np.allclose(normalized_adjacency(A), want, atol=1e-15)


def test_validation_rejects_bad_input():
    with pytest.raises(ValueError):
        normalized_adjacency(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        normalized_adjacency(np.eye(2))


def test_spectral_bound_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(20):
        T = 55
        A = np.zeros((T, T))
        for _ in range(150):
            i, j = rng.integers(0, T, 2)
            if i != j:
                A[i, j] = A[j, i] = 1.0
        eig = np.linalg.eigvalsh(normalized_adjacency(A))
        assert eig.min() >= -1.0 - 1e-12
        assert eig.max() <= 1.0 + 1e-12


def test_permutation_equivariance():
    rng = np.random.default_rng(8)
    for _ in range(20):
        T = 30
        A = np.zeros((T, T))
        for _ in range(60):
            i, j = rng.integers(0, T, 2)
            if i != j:
                A[i, j] = A[j, i] = 1.0
        P = np.eye(T)[rng.permutation(T)]
        lhs = normalized_adjacency(P @ A @ P.T)
        rhs = P @ normalized_adjacency(A) @ P.T
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_schema_round_trip(schema):
    back = GraphSchema.from_dict(schema.to_dict())
    assert back.total_nodes == schema.total_nodes
    assert back.horizons == schema.horizons
    assert back.pos_scale == schema.pos_scale


def test_sigma_propagation_through_segment_lengths(p_h, schema):
    from hrcplan.predictor import UncertainPrediction
    rng = np.random.default_rng(9)
    raw = rng.normal(0, 1, (schema.n_samples, 50, 6))
    pred = UncertainPrediction.from_raw_samples(raw)
    ns = human_nodes_from_prediction(pred, p_h, schema)
    l1, l2 = p_h.upper_arm_length, p_h.forearm_length
    for h_idx, h in enumerate(schema.horizons):
        u = pred.variance[h]
        assert ns.sigmas[h_idx, 0] == pytest.approx(l1 * np.sqrt(u[:3].sum()))
        assert ns.sigmas[h_idx, 1] == pytest.approx(
            np.sqrt(l1 ** 2 * u[:3].sum() + l2 ** 2 * u[3:].sum()))
