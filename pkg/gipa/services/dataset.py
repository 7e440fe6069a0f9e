"""Dataset ingestion and the synthetic planted-signal generator.

On-disk layout (UTF-8, header row, decimal-point floats), one directory:

  nodes.csv   node_id, f1..f_dn
  edges.csv   src, dst, e1..e_de       one row per undirected edge
  labels.csv  node_id, y1..yC          y in {0, 1}
  splits.csv  node_id, split           split in {train, valid, test}

Node ids must be exactly 0..n-1. ogbn-proteins ships no node input
features, so a preconverted copy must supply nodes.csv columns itself.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from gipa.exceptions import DatasetError, GraphConstructionError
from gipa.graph import CsrGraph, build_graph
from gipa.services.layer import segment_sum

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")
FILES = ("nodes.csv", "edges.csv", "labels.csv", "splits.csv")


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: CsrGraph
    labels: np.ndarray
    splits: Dict[str, np.ndarray]
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def num_labels(self) -> int:
        return int(self.labels.shape[1])

    def same_as(self, other: "DatasetBundle") -> bool:
        return (
            self.graph.same_as(other.graph)
            and np.array_equal(self.labels, other.labels)
            and self.splits.keys() == other.splits.keys()
            and all(np.array_equal(self.splits[k], other.splits[k]) for k in self.splits)
            and self.metadata == other.metadata
        )


def _metadata(graph: CsrGraph, node_cols, edge_cols, label_cols) -> Dict[str, object]:
    return {
        "node_columns": list(node_cols),
        "edge_columns": list(edge_cols),
        "label_columns": list(label_cols),
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "num_undirected_edges": graph.num_undirected_edges,
        "num_labels": len(label_cols),
    }


def split_nodes(n: int, fractions: Sequence[float] = (0.6, 0.2, 0.2),
                seed: int = 0) -> Dict[str, np.ndarray]:
    """Seeded shuffle cut into contiguous train/valid/test slices."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.shape != (len(SPLIT_NAMES),) or np.any(fractions < 0):
        raise DatasetError(f"need {len(SPLIT_NAMES)} non-negative fractions, got {fractions.tolist()}")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise DatasetError(f"split fractions must sum to 1, got {fractions.sum()}")
    order = np.random.default_rng(seed).permutation(n)
    bounds = np.round(np.cumsum(fractions) * n).astype(np.int64)
    bounds[-1] = n
    starts = np.concatenate([[0], bounds[:-1]])
    return {name: np.sort(order[lo:hi]) for name, lo, hi in zip(SPLIT_NAMES, starts, bounds)}


def random_edges(n: int, avg_degree: int, d_edge: int,
                 rng: np.random.Generator) -> List[Tuple[int, int, np.ndarray]]:
    """Every node draws avg_degree distinct partners uniformly from the others;
    the same pair may still be drawn from both ends."""
    if n < 2:
        return []
    draws = min(avg_degree, n - 1)
    edges = []
    for i in range(n):
        picks = rng.choice(n - 1, size=draws, replace=False)
        for c in np.sort(picks).tolist():
            j = c if c < i else c + 1
            edges.append((i, j, rng.standard_normal(d_edge)))
    return edges


def generate_synthetic(n: int = 300, avg_degree: int = 3, d_node: int = 8, d_edge: int = 8,
                       num_labels: int = 8, seed: int = 0,
                       out_dir: Union[str, Path, None] = None,
                       fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> DatasetBundle:
    """Random graph whose label c at node i is 1 iff the sum over its incident
    edges of w_c . e_ij is positive, for hidden random vectors w_c."""
    if n < 4:
        raise DatasetError(f"synthetic graphs need n >= 4, got {n}")
    if num_labels < 1 or d_node < 1 or d_edge < 1:
        raise DatasetError("label count and feature widths must be >= 1")
    if not 0 <= avg_degree < n:
        raise DatasetError(f"avg_degree must be in [0, {n}), got {avg_degree}")
    node_rng, edge_rng, label_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))

    node_features = node_rng.standard_normal((n, d_node))
    graph = build_graph(random_edges(n, avg_degree, d_edge, edge_rng), node_features,
                        edge_dim=d_edge)
    hidden = label_rng.standard_normal((d_edge, num_labels))
    signal = segment_sum(graph.edge_features[graph.edge_ids] @ hidden,
                         graph.row_indices, n)
    labels = (signal > 0).astype(np.float64)
    splits = split_nodes(n, fractions, seed)

    bundle = DatasetBundle(
        graph=graph,
        labels=labels,
        splits=splits,
        metadata=_metadata(
            graph,
            [f"f{k + 1}" for k in range(d_node)],
            [f"e{k + 1}" for k in range(d_edge)],
            [f"y{k + 1}" for k in range(num_labels)],
        ),
    )
    logger.info("generated synthetic dataset: n=%d, %d undirected edges, %d labels",
                n, graph.num_undirected_edges, num_labels)
    if out_dir is not None:
        write_dataset(bundle, out_dir)
    return bundle


def _fmt(value: float) -> str:
    return repr(float(value))


def write_dataset(bundle: DatasetBundle, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_files(bundle, out)
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {out}: {exc}") from exc
    logger.info("wrote dataset to %s", out)
    return out


def _write_files(bundle: DatasetBundle, out: Path) -> None:
    g, meta = bundle.graph, bundle.metadata

    def open_writer(name):
        handle = (out / name).open("w", encoding="utf-8", newline="")
        return handle, csv.writer(handle, lineterminator="\n")

    handle, writer = open_writer("nodes.csv")
    with handle:
        writer.writerow(["node_id", *meta["node_columns"]])
        for i, row in enumerate(g.node_features):
            writer.writerow([i, *map(_fmt, row)])

    handle, writer = open_writer("edges.csv")
    with handle:
        writer.writerow(["src", "dst", *meta["edge_columns"]])
        for (a, b), row in zip(g.edge_endpoints.tolist(), g.edge_features):
            writer.writerow([a, b, *map(_fmt, row)])

    handle, writer = open_writer("labels.csv")
    with handle:
        writer.writerow(["node_id", *meta["label_columns"]])
        for i, row in enumerate(bundle.labels.astype(np.int64).tolist()):
            writer.writerow([i, *row])

    assigned = sorted((int(node), name) for name, nodes in bundle.splits.items() for node in nodes)
    handle, writer = open_writer("splits.csv")
    with handle:
        writer.writerow(["node_id", "split"])
        writer.writerows(assigned)


def _read_table(path: Path, first_columns: Sequence[str]) -> Tuple[List[str], List[List[str]]]:
    if not path.is_file():
        raise DatasetError(f"missing file {path}")
    try:
        with path.open(encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path.name} is empty")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if header[:len(first_columns)] != list(first_columns):
        raise DatasetError(f"{path.name} header must start with {list(first_columns)}, got {header}")
    for number, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DatasetError(
                f"{path.name} line {number}: {len(row)} fields, header has {len(header)}")
    return header, body


def _parse(kind, value: str, where: str):
    try:
        return kind(value)
    except ValueError as exc:
        raise DatasetError(f"{where}: cannot parse {value!r}") from exc


def _node_order(ids: List[int], n: int, where: str) -> np.ndarray:
    """Row order that sorts ids; ids must be exactly 0..n-1."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape[0] != n or not np.array_equal(np.sort(ids), np.arange(n)):
        raise DatasetError(f"{where}: node ids must be exactly 0..{n - 1} with no gaps or repeats")
    return np.argsort(ids, kind="stable")


def load_dataset(directory: Union[str, Path]) -> DatasetBundle:
    root = Path(directory)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")

    header, body = _read_table(root / "nodes.csv", ["node_id"])
    node_cols = header[1:]
    n = len(body)
    ids = [_parse(int, r[0], f"nodes.csv line {k + 2}") for k, r in enumerate(body)]
    features = np.array([[_parse(float, v, f"nodes.csv line {k + 2}") for v in r[1:]]
                         for k, r in enumerate(body)], dtype=np.float64).reshape(n, len(node_cols))
    features = features[_node_order(ids, n, "nodes.csv")]

    header, body = _read_table(root / "edges.csv", ["src", "dst"])
    edge_cols = header[2:]
    edges = []
    for k, r in enumerate(body):
        where = f"edges.csv line {k + 2}"
        edges.append((_parse(int, r[0], where), _parse(int, r[1], where),
                      [_parse(float, v, where) for v in r[2:]]))
    try:
        graph = build_graph(edges, features, edge_dim=len(edge_cols))
    except GraphConstructionError as exc:
        raise DatasetError(f"edges.csv: {exc}") from exc

    header, body = _read_table(root / "labels.csv", ["node_id"])
    label_cols = header[1:]
    if not label_cols or not body:
        raise DatasetError("labels.csv has no label columns or no rows")
    label_ids, label_rows = [], []
    for k, r in enumerate(body):
        where = f"labels.csv line {k + 2}"
        label_ids.append(_parse(int, r[0], where))
        values = [_parse(int, v, where) for v in r[1:]]
        if any(v not in (0, 1) for v in values):
            raise DatasetError(f"{where}: labels must be 0 or 1")
        label_rows.append(values)
    labels = np.array(label_rows, dtype=np.float64)[_node_order(label_ids, n, "labels.csv")]

    _, body = _read_table(root / "splits.csv", ["node_id", "split"])
    members = {name: [] for name in SPLIT_NAMES}
    seen = set()
    for k, row in enumerate(body):
        where = f"splits.csv line {k + 2}"
        node = _parse(int, row[0], where)
        token = row[1].strip()
        if token not in members:
            raise DatasetError(f"{where}: unknown split {token!r}")
        if not 0 <= node < n or node in seen:
            raise DatasetError(f"{where}: node {node} out of range or listed twice")
        seen.add(node)
        members[token].append(node)
    splits = {name: np.array(sorted(nodes), dtype=np.int64) for name, nodes in members.items()}

    logger.info("loaded dataset %s: %d nodes, %d entries, %d labels",
                root, n, graph.num_edges, len(label_cols))
    return DatasetBundle(graph, labels, splits, _metadata(graph, node_cols, edge_cols, label_cols))
