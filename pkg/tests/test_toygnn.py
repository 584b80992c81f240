import numpy as np
import pytest

from gridlink.graphio import Graph, GraphError, NodeData, all_n_hop_pairs, generate_synthetic
from gridlink.simkit import mean_pair_similarity, validate_predictions
from gridlink.toygnn import (
    ToyModel,
    forward,
    init_model,
    loss_and_grads,
    normalized_adjacency,
    train,
)


@pytest.fixture(scope="module")
def sbm():
    return generate_synthetic(0, 4, 30, 0.2, 0.01)


def test_normalized_adjacency_path():
    g = Graph.from_edges(3, [(0, 1), (1, 2)])
    A = normalized_adjacency(g).toarray()
    d = np.array([2, 3, 2])
    want = (np.eye(3) + np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])) / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(A, want)


def test_loss_gradients_finite_difference(sbm):
    g, data = sbm
    Ahat = normalized_adjacency(g)
    Y = np.eye(4)[data.labels]
    m = init_model(4, 5, 4, 1)
    loss, dW1, dW2, _ = loss_and_grads(Ahat, data.attributes, Y, m.W1, m.W2)
    rng = np.random.default_rng(0)
    h = 1e-6
    for W, dW, which in ((m.W1, dW1, 0), (m.W2, dW2, 1)):
        for _ in range(6):
            idx = tuple(rng.integers(0, s) for s in W.shape)
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            args_p = (Wp, m.W2) if which == 0 else (m.W1, Wp)
            args_m = (Wm, m.W2) if which == 0 else (m.W1, Wm)
            fd = (loss_and_grads(Ahat, data.attributes, Y, *args_p)[0]
                  - loss_and_grads(Ahat, data.attributes, Y, *args_m)[0]) / (2 * h)
            assert dW[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_fits_separable_data(sbm):
    g, data = sbm
    m = train(g, data, epochs=200, lr=0.1, seed=0)
    P = forward(m, g, data)
    assert m.train_accuracy >= 0.9
    assert (P.argmax(1) == data.labels).mean() == pytest.approx(m.train_accuracy)
    validate_predictions(P)


def test_training_deterministic(sbm):
    g, data = sbm
    a = train(g, data, epochs=20, seed=3)
    b = train(g, data, epochs=20, seed=3)
    assert np.array_equal(a.W1, b.W1) and np.array_equal(a.W2, b.W2)


def test_zero_epochs_gives_valid_output(sbm):
    g, data = sbm
    m = train(g, data, epochs=0)
    P = forward(m, g, data)
    assert P.shape == (g.num_nodes, 4)
    np.testing.assert_allclose(P.sum(1), 1.0)


def test_linked_pairs_more_similar(sbm):
    g, data = sbm
    P = forward(train(g, data), g, data)
    gap = mean_pair_similarity(P, g.edges) - mean_pair_similarity(P, all_n_hop_pairs(g, 3))
    assert gap >= 0.1


def test_json_roundtrip(sbm):
    g, data = sbm
    m = train(g, data, epochs=5)
    m2 = ToyModel.from_json(m.to_json())
    assert np.array_equal(forward(m, g, data), forward(m2, g, data))


def test_shape_errors(sbm):
    g, data = sbm
    m = init_model(3, 4, 4, 0)
    with pytest.raises(GraphError, match="dimension"):
        forward(m, g, data)
    one_class = NodeData(data.attributes, np.zeros(g.num_nodes, dtype=np.int64))
    with pytest.raises(GraphError, match="two classes"):
        train(g, one_class)
