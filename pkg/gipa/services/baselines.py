"""Closed-form attention scores (additive, dot, general, concat, local,
scaled dot) kept next to the MLP attention for comparison."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from gipa.exceptions import ShapeError
from gipa.graph import CsrGraph
from gipa.services.layer import EdgeIndex, edge_softmax
from gipa.utils.validate import as_matrix, as_vector

SCORE_KINDS = ("additive", "dot", "general", "concat", "local", "scaled_dot")


@dataclass
class ScoreParams:
    W: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None

    def matrix(self) -> np.ndarray:
        if self.W is None:
            raise ShapeError("this score function needs a matrix W")
        return as_matrix(self.W, "W")

    def vector(self) -> np.ndarray:
        if self.u is None:
            raise ShapeError("this score function needs an attention vector u")
        return as_vector(self.u, "u")


def _pair(q, k, same_width: bool = False):
    q, k = as_vector(q, "q"), as_vector(k, "k")
    if same_width and q.shape != k.shape:
        raise ShapeError(f"q has width {q.shape[0]}, k has width {k.shape[0]}")
    return q, k


def _apply(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    if W.shape[1] != x.shape[0]:
        raise ShapeError(f"W has {W.shape[1]} columns, input has width {x.shape[0]}")
    return W @ x


def additive_score(q, k, W, u) -> float:
    q, k = _pair(q, k)
    hidden = np.tanh(_apply(as_matrix(W, "W"), np.concatenate([q, k])))
    u = as_vector(u, "u")
    if u.shape != hidden.shape:
        raise ShapeError(f"u has width {u.shape[0]}, W emits {hidden.shape[0]}")
    return float(u @ hidden)


def dot_score(q, k) -> float:
    q, k = _pair(q, k, same_width=True)
    return float(q @ k)


def general_score(q, k, W) -> float:
    q, k = _pair(q, k)
    transformed = _apply(as_matrix(W, "W"), k)
    if transformed.shape != q.shape:
        raise ShapeError(f"W has {transformed.shape[0]} rows, q has width {q.shape[0]}")
    return float(q @ transformed)


def concat_score(q, k, W, u) -> float:
    """u^T W[q;k]: the concat transform reduced to a scalar by u."""
    q, k = _pair(q, k)
    projected = _apply(as_matrix(W, "W"), np.concatenate([q, k]))
    u = as_vector(u, "u")
    if u.shape != projected.shape:
        raise ShapeError(f"u has width {u.shape[0]}, W emits {projected.shape[0]}")
    return float(u @ projected)


def local_score(q, W) -> float:
    """Score from q alone; W must map q to a single value."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    out = _apply(W, as_vector(q, "q"))
    if out.shape != (1,):
        raise ShapeError(f"local W must have a single row, got {W.shape[0]}")
    return float(out[0])


def scaled_dot_score(q, k) -> float:
    q, k = _pair(q, k, same_width=True)
    if q.shape[0] < 1:
        raise ShapeError("scaled dot needs d_k >= 1")
    return float(q @ k) / np.sqrt(q.shape[0])


def score(kind: str, q, k, params: ScoreParams) -> float:
    if kind == "additive":
        return additive_score(q, k, params.matrix(), params.vector())
    if kind == "dot":
        return dot_score(q, k)
    if kind == "general":
        return general_score(q, k, params.matrix())
    if kind == "concat":
        return concat_score(q, k, params.matrix(), params.vector())
    if kind == "local":
        return local_score(q, params.matrix())
    if kind == "scaled_dot":
        return scaled_dot_score(q, k)
    raise ValueError(f"unknown score kind {kind!r}, expected one of {SCORE_KINDS}")


def baseline_edge_attention(g: CsrGraph, h: np.ndarray, kind: str,
                            params: Optional[ScoreParams] = None) -> np.ndarray:
    """Scores every directed entry (q = destination row, k = source row) with a
    closed-form function and normalizes per destination with edge_softmax.
    Returns a [num_edges x 1] weight column."""
    params = params or ScoreParams()
    h = as_matrix(h, "h")
    edges = EdgeIndex.from_graph(g)
    raw = np.array([score(kind, h[i], h[j], params)
                    for i, j in zip(edges.dst.tolist(), edges.src.tolist())],
                   dtype=np.float64).reshape(-1, 1)
    return edge_softmax(edges, raw)
