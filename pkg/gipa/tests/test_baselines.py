import numpy as np
import pytest

from gipa.exceptions import ShapeError
from gipa.graph import build_graph
from gipa.services.baselines import (
    SCORE_KINDS,
    ScoreParams,
    additive_score,
    baseline_edge_attention,
    concat_score,
    dot_score,
    general_score,
    local_score,
    scaled_dot_score,
    score,
)


def test_additive_examples():
    assert additive_score([1.0], [1.0], [[1.0, 1.0]], [0.0]) == 0.0
    assert additive_score([1.0], [2.0], [[0.0, 0.0]], [3.0]) == 0.0
    assert additive_score([1.0], [1.0], [[1.0, 1.0]], [1.0]) == pytest.approx(np.tanh(2.0), abs=1e-15)
    assert additive_score([1.0], [1.0], [[1.0, 1.0]], [1.0]) == pytest.approx(0.9640, abs=1e-4)


def test_dot_general_local():
    assert dot_score([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert general_score([1.0, 2.0], [3.0, 4.0], np.eye(2)) == 11.0
    assert local_score([1.0, -2.0], [[0.0, 0.0]]) == 0.0
    assert local_score([1.0, -2.0], [1.0, 1.0]) == -1.0


def test_concat_reduces_through_u():
    W = [[1.0, 0.0], [0.0, 1.0]]
    assert concat_score([2.0], [5.0], W, [1.0, 1.0]) == 7.0


def test_scaled_dot():
    assert scaled_dot_score([1.0] * 4, [1.0] * 4) == 2.0
    assert scaled_dot_score([3.0], [-2.0]) == dot_score([3.0], [-2.0])
    assert scaled_dot_score([1.0, 0.0], [0.0, 5.0]) == 0.0


@pytest.mark.parametrize("case", range(20))
def test_additive_is_odd_in_its_inputs(case):
    rng = np.random.default_rng(case)
    d_q, d_k, hidden = rng.integers(1, 6, size=3)
    q, k = rng.normal(size=d_q), rng.normal(size=d_k)
    W, u = rng.normal(size=(hidden, d_q + d_k)), rng.normal(size=hidden)
    assert additive_score(-q, -k, W, u) == pytest.approx(-additive_score(q, k, W, u), abs=1e-12)


@pytest.mark.parametrize("case", range(20))
def test_scaled_dot_is_dot_over_root_width(case):
    rng = np.random.default_rng(100 + case)
    d_k = int(rng.integers(1, 65))
    q, k = rng.normal(size=d_k), rng.normal(size=d_k)
    expected = dot_score(q, k) / np.sqrt(d_k)
    assert scaled_dot_score(q, k) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_shape_errors():
    with pytest.raises(ShapeError):
        dot_score([1.0], [1.0, 2.0])
    with pytest.raises(ShapeError):
        general_score([1.0, 2.0, 3.0], [1.0, 2.0], np.eye(2))
    with pytest.raises(ShapeError):
        local_score([1.0, 2.0], np.eye(2))
    with pytest.raises(ShapeError):
        additive_score([1.0], [1.0], [[1.0, 1.0]], [1.0, 2.0])


def test_dispatch_and_missing_parameters():
    params = ScoreParams(W=np.eye(2))
    assert score("general", [1.0, 2.0], [3.0, 4.0], params) == 11.0
    with pytest.raises(ShapeError):
        score("additive", [1.0], [1.0], params)
    with pytest.raises(ValueError):
        score("cosine", [1.0], [1.0], params)


@pytest.mark.parametrize("kind", SCORE_KINDS)
def test_edge_attention_normalizes_per_destination(kind):
    rng = np.random.default_rng(0)
    edges = [(0, 1, [1.0]), (0, 2, [1.0]), (1, 2, [1.0]), (2, 3, [1.0])]
    g = build_graph(edges, np.zeros((5, 1)))
    h = rng.normal(size=(5, 3))
    params = ScoreParams(W=rng.normal(size=(1 if kind == "local" else 3, 3)), u=rng.normal(size=3))
    if kind in ("additive", "concat"):
        params.W = rng.normal(size=(3, 6))
    a = baseline_edge_attention(g, h, kind, params)
    assert a.shape == (g.num_edges, 1)
    totals = np.bincount(g.row_indices, weights=a[:, 0], minlength=5)
    assert np.allclose(totals[:4], 1.0, rtol=0, atol=1e-12)
    assert totals[4] == 0.0
