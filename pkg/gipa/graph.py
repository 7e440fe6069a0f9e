"""Immutable compressed-row graph shared by every other module.

Rows are destination nodes; a row's segment lists the source nodes of its
incoming edges together with the id of the undirected edge they travel on.
Undirected input edges are symmetrized at build time and both directions
share a single row of ``edge_features``.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from gipa.exceptions import GraphConstructionError
from gipa.utils.validate import as_matrix, check_index

logger = logging.getLogger(__name__)

EdgeInput = Tuple[int, int, Sequence[float]]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class CsrGraph:
    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_ids: np.ndarray
    node_features: np.ndarray
    edge_features: np.ndarray
    # canonical (min, max) endpoints of every undirected edge, one per feature row
    edge_endpoints: np.ndarray
    row_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        degrees = np.diff(self.row_offsets)
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), degrees)
        object.__setattr__(self, "row_indices", _frozen(rows))

    @property
    def num_edges(self) -> int:
        return int(self.col_indices.shape[0])

    @property
    def num_undirected_edges(self) -> int:
        return int(self.edge_features.shape[0])

    @property
    def node_dim(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def edge_dim(self) -> int:
        return int(self.edge_features.shape[1])

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def segment(self, i: int) -> slice:
        check_index(i, self.num_nodes, "node")
        return slice(int(self.row_offsets[i]), int(self.row_offsets[i + 1]))

    def in_neighbors(self, i: int) -> List[Tuple[int, int]]:
        """(neighbor id, edge id) pairs of node i, in canonical order"""
        seg = self.segment(i)
        return list(zip(self.col_indices[seg].tolist(), self.edge_ids[seg].tolist()))

    def same_as(self, other: "CsrGraph") -> bool:
        """Bit-level equality of every stored array"""
        if self.num_nodes != other.num_nodes:
            return False
        names = ("row_offsets", "col_indices", "edge_ids", "node_features",
                 "edge_features", "edge_endpoints")
        for name in names:
            mine, theirs = getattr(self, name), getattr(other, name)
            if mine.dtype != theirs.dtype or mine.shape != theirs.shape:
                return False
            if mine.tobytes() != theirs.tobytes():
                return False
        return True


def build_graph(
    edges: Iterable[EdgeInput],
    node_features,
    edge_dim: Optional[int] = None,
) -> CsrGraph:
    """Build a symmetrized CsrGraph from undirected (src, dst, feature_row) triples.

    Undirected edges are put in a canonical order (smaller endpoint, larger
    endpoint, feature row) before edge ids are assigned, so any permutation
    or reorientation of the input yields a bit-identical graph. Duplicate
    edges are kept; a self-loop is stored once.
    """
    try:
        node_features = as_matrix(node_features, "node_features").copy()
    except ValueError as exc:
        raise GraphConstructionError(str(exc)) from exc
    if not np.all(np.isfinite(node_features)):
        raise GraphConstructionError("node_features contain non-finite values")
    n = node_features.shape[0]

    edges = list(edges)
    m = len(edges)
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    rows = []
    width = edge_dim
    for k, (s, d, row) in enumerate(edges):
        row = np.asarray(row, dtype=np.float64).reshape(-1)
        if width is None:
            width = row.shape[0]
        if row.shape[0] != width:
            raise GraphConstructionError(
                f"edge {k} has {row.shape[0]} features, expected {width}")
        for endpoint in (s, d):
            if not 0 <= int(endpoint) < n:
                raise GraphConstructionError(
                    f"edge {k} endpoint {endpoint} out of range [0, {n})")
        src[k], dst[k] = int(s), int(d)
        rows.append(row)
    width = 0 if width is None else width
    feats = np.vstack(rows) if rows else np.zeros((0, width), dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise GraphConstructionError("edge features contain non-finite values")

    lo, hi = np.minimum(src, dst), np.maximum(src, dst)
    keys = [feats[:, c] for c in reversed(range(width))] + [hi, lo]
    order = np.lexsort(keys) if m else np.zeros(0, dtype=np.int64)
    lo, hi, feats = lo[order], hi[order], np.ascontiguousarray(feats[order])
    eid = np.arange(m, dtype=np.int64)

    loop = lo == hi
    entry_dst = np.concatenate([hi, lo[~loop]])
    entry_src = np.concatenate([lo, hi[~loop]])
    entry_eid = np.concatenate([eid, eid[~loop]])
    canonical = np.lexsort((entry_eid, entry_src, entry_dst))
    entry_dst, entry_src, entry_eid = (
        entry_dst[canonical], entry_src[canonical], entry_eid[canonical])

    row_offsets = np.zeros(n + 1, dtype=np.int64)
    row_offsets[1:] = np.cumsum(np.bincount(entry_dst, minlength=n))

    logger.debug("built graph: %d nodes, %d undirected edges, %d entries",
                 n, m, entry_src.shape[0])
    return CsrGraph(
        num_nodes=n,
        row_offsets=_frozen(row_offsets),
        col_indices=_frozen(np.ascontiguousarray(entry_src)),
        edge_ids=_frozen(np.ascontiguousarray(entry_eid)),
        node_features=_frozen(node_features),
        edge_features=_frozen(feats),
        edge_endpoints=_frozen(np.stack([lo, hi], axis=1).reshape(m, 2)),
    )


def in_neighbors(g: CsrGraph, i: int) -> List[Tuple[int, int]]:
    return g.in_neighbors(i)
