import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import distance

from gridlink.simkit import (
    FEATURE_METRICS,
    MetricKind,
    PredictionError,
    UnsupportedMetricError,
    batch_similarity,
    batch_similarity_and_grad,
    cosine,
    correlation,
    fmt,
    load_predictions,
    mean_pair_similarity,
    pair_similarity,
    save_predictions,
    similarity,
    similarity_gradient,
    tied_argmax_rows,
    validate_predictions,
)

GRAD_KINDS = [MetricKind.CORRELATION, MetricKind.COSINE, MetricKind.COMBINED]


def fd_grad(f, s, h=1e-6):
    g = np.zeros_like(s)
    for a in range(len(s)):
        e = np.zeros_like(s)
        e[a] = h
        g[a] = (f(s + e) - f(s - e)) / (2 * h)
    return g


def test_constant_vector_convention():
    x = np.array([0.5, 0.5])
    assert cosine(x, x) == pytest.approx(1.0)
    assert correlation(x, x) == 0.0
    assert similarity(x, x) == pytest.approx(1.0)


def test_orthogonal_anticorrelated():
    x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert cosine(x, y) == 0.0
    assert correlation(x, y) == pytest.approx(-1.0)
    assert similarity(x, y) == pytest.approx(-1.0)


def test_combined_matches_scipy(rng):
    # scipy's cosine / correlation distances are an independent implementation
    for _ in range(50):
        x, y = rng.dirichlet(np.ones(7), 2)
        want = (1 - distance.cosine(x, y)) + (1 - distance.correlation(x, y))
        assert abs(similarity(x, y) - want) < 1e-12


@pytest.mark.parametrize("kind,fn", [("euclidean", distance.euclidean), ("chebyshev", distance.chebyshev),
                                     ("manhattan", distance.cityblock)])
def test_distances_match_scipy(rng, kind, fn):
    P = rng.dirichlet(np.ones(5), 6)
    pairs = np.array([(0, 1), (2, 3), (4, 5), (1, 1)])
    got = pair_similarity(P, pairs, kind)
    want = [fn(P[i], P[j]) for i, j in pairs]
    np.testing.assert_allclose(got, want, atol=1e-14)
    assert similarity(P[0], P[1], kind) == pytest.approx(want[0])


def test_cosine_gradient_at_identity_is_orthogonal():
    x = np.array([0.6, 0.4])
    g = similarity_gradient(x, x, np.zeros(2), MetricKind.COSINE)
    assert abs(np.dot(g, x)) < 1e-12
    np.testing.assert_allclose(g, fd_grad(lambda s: cosine(x + s, x), np.zeros(2)), atol=1e-8)


def test_correlation_gradient_zero_against_constant():
    x = np.array([0.2, 0.5, 0.3])
    y = np.full(3, 1 / 3)
    for s in (np.zeros(3), np.array([0.1, -0.05, -0.05])):
        assert np.all(similarity_gradient(x, y, s, MetricKind.CORRELATION) == 0)


@pytest.mark.parametrize("kind", GRAD_KINDS)
def test_gradient_finite_differences(rng, kind):
    for _ in range(20):
        A = int(rng.integers(3, 11))
        x, y = rng.dirichlet(np.ones(A), 2)
        s = rng.normal(0, 0.02, A)
        g = similarity_gradient(x, y, s, kind)
        fd = fd_grad(lambda t: similarity(x + t, y, kind), s)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_gradient_rejects_distance():
    x = np.array([0.3, 0.7])
    with pytest.raises(UnsupportedMetricError):
        similarity_gradient(x, x, np.zeros(2), "euclidean")
    with pytest.raises(UnsupportedMetricError):
        batch_similarity_and_grad(x, x[None], MetricKind.MANHATTAN)


@pytest.mark.parametrize("kind", GRAD_KINDS)
def test_batch_agrees_with_scalar(rng, kind):
    x = rng.dirichlet(np.ones(6))
    Y = rng.dirichlet(np.ones(6), 5)
    sims, grad = batch_similarity_and_grad(x, Y, kind)
    np.testing.assert_allclose(sims, [similarity(x, y, kind) for y in Y], atol=1e-13)
    want = sum(similarity_gradient(x, y, np.zeros(6), kind) for y in Y)
    np.testing.assert_allclose(grad, want, atol=1e-12)
    np.testing.assert_allclose(batch_similarity(x, Y, kind), sims)


def test_batch_empty():
    sims, grad = batch_similarity_and_grad(np.array([0.4, 0.6]), np.zeros((0, 2)))
    assert sims.shape == (0,) and np.all(grad == 0)


def test_pair_similarity_matches_scalar(rng):
    P = rng.dirichlet(np.ones(4), 10)
    pairs = rng.integers(0, 10, (30, 2))
    for kind in FEATURE_METRICS:
        got = pair_similarity(P, pairs, kind)
        want = [similarity(P[i], P[j], kind) for i, j in pairs]
        np.testing.assert_allclose(got, want, atol=1e-13)


def test_mean_pair_similarity():
    P = np.array([[0.5, 0.5], [0.5, 0.5], [0.9, 0.1], [0.2, 0.8]])
    assert mean_pair_similarity(P, [(0, 1)]) == pytest.approx(1.0)
    a = similarity(P[2], P[3])
    b = similarity(P[0], P[2])
    assert mean_pair_similarity(P, [(2, 3), (0, 2)]) == pytest.approx((a + b) / 2)
    with pytest.raises(ValueError):
        mean_pair_similarity(P, [])


def test_similarity_rejects_bad_shapes():
    with pytest.raises(ValueError):
        similarity(np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        similarity(np.array([0.5, 0.5]), np.array([0.2, 0.3, 0.5]))


def test_validate_predictions():
    ok = np.array([[0.2, 0.8], [0.6, 0.4]])
    assert validate_predictions(ok) is not None
    with pytest.raises(PredictionError, match="sum"):
        validate_predictions(np.array([[0.2, 0.7]]))
    with pytest.raises(PredictionError, match="outside"):
        validate_predictions(np.array([[1.2, -0.2]]))
    with pytest.raises(PredictionError, match="non-finite"):
        validate_predictions(np.array([[np.nan, 1.0]]))
    with pytest.raises(PredictionError, match="2-D"):
        validate_predictions(np.array([1.0]))


def test_tied_argmax_rows():
    P = np.array([[0.5, 0.5], [0.6, 0.4]])
    assert tied_argmax_rows(P) == [0]
    Q = np.array([[0.4, 0.4, 0.2], [0.2, 0.3, 0.5], [0.1, 0.45, 0.45]])
    assert tied_argmax_rows(Q) == [0, 2]
    assert tied_argmax_rows(Q, [1, 2]) == [2]
    assert tied_argmax_rows(Q, []) == []


def test_fmt_is_stable():
    assert fmt(-0.0) == "0.0"
    assert fmt(0.1) == "0.1"
    x = 1 / 3
    assert float(fmt(x)) == x


def test_prediction_file_roundtrip(tmp_path, rng):
    P = rng.dirichlet(np.ones(3), 7)
    path = tmp_path / "p.csv"
    save_predictions(path, P)
    Q = load_predictions(path)
    assert np.array_equal(P, Q)
    assert path.read_text().splitlines()[0] == "id,p0,p1,p2"


def test_prediction_file_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("node,p0,p1\n0,0.5,0.5\n")
    with pytest.raises(PredictionError, match="header"):
        load_predictions(bad)
    bad.write_text("id,p0,p1\n0,0.5\n")
    with pytest.raises(PredictionError, match="fields"):
        load_predictions(bad)
    bad.write_text("id,p0,p1\n0,0.5,0.5\n2,0.5,0.5\n")
    with pytest.raises(PredictionError, match="ids"):
        load_predictions(bad)
    bad.write_text("")
    with pytest.raises(PredictionError, match="empty"):
        load_predictions(bad)


prob = arrays(np.float64, st.integers(2, 8), elements=st.floats(0.001, 1.0)).map(lambda a: a / a.sum())


@settings(max_examples=200, deadline=None)
@given(prob, st.data())
def test_similarity_properties(x, data):
    y = data.draw(arrays(np.float64, len(x), elements=st.floats(0.001, 1.0)).map(lambda a: a / a.sum()))
    s = similarity(x, y)
    assert -2 - 1e-12 <= s <= 2 + 1e-12
    assert s == pytest.approx(similarity(y, x), abs=1e-12)
    assert cosine(x, y) >= 0  # non-negative vectors
