"""Central finite-difference verification of every hand-written backward pass."""
import dataclasses
import logging
from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel

from gipa.config import TrainConfig
from gipa.exceptions import ShapeError
from gipa.graph import CsrGraph, build_graph
from gipa.services.dataset import random_edges
from gipa.services.model import GipaModel

logger = logging.getLogger(__name__)

MAX_NODES = 50


class GradcheckRow(BaseModel):
    name: str
    checked: int
    skipped_kinks: int
    max_abs_error: float
    max_rel_error: float
    passed: bool


class GradcheckReport(BaseModel):
    tolerance: float
    atol: float
    rows: List[GradcheckRow]
    passed: bool

    def worst(self) -> Optional[GradcheckRow]:
        return max(self.rows, key=lambda r: r.max_rel_error, default=None)


def _bool_arrays(obj, out: list) -> list:
    """Every boolean array reachable from a cache (ReLU masks, edge masks)."""
    if isinstance(obj, np.ndarray):
        if obj.dtype == bool:
            out.append(obj)
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            _bool_arrays(item, out)
    elif dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            _bool_arrays(getattr(obj, f.name), out)
    return out


def _same_masks(left: list, right: list) -> bool:
    return len(left) == len(right) and all(np.array_equal(a, b) for a, b in zip(left, right))


def random_graph(n: int, avg_degree: int, d_node: int, d_edge: int, seed: int) -> CsrGraph:
    rng = np.random.default_rng(seed)
    node_features = rng.uniform(-1.0, 1.0, size=(n, d_node))
    edges = random_edges(n, avg_degree, d_edge, rng)
    return build_graph(edges, node_features, edge_dim=d_edge)


def gradient_check(model: GipaModel, g: CsrGraph, tolerance: float = 1e-4, atol: float = 1e-7,
                   samples_per_tensor: int = 16, step: float = 1e-5,
                   seed: int = 0, training: bool = False,
                   edge_keep: Optional[np.ndarray] = None) -> GradcheckReport:
    """Compares analytic gradients of sum(logits * R), R a fixed random matrix,
    against central differences. Entries whose perturbation flips a ReLU mask
    sit on a kink and are replaced by other entries.

    In training mode every forward pass draws from a freshly seeded generator,
    so all evaluations share the same dropout masks; edge_keep fixes the
    surviving edges.
    """
    rng = np.random.default_rng(seed)
    projection = rng.uniform(-1.0, 1.0, size=(g.num_nodes, model.num_labels))

    def forward(graph: CsrGraph):
        dropout_rng = np.random.default_rng(seed + 1) if training else None
        return model.forward(graph, training=training, rng=dropout_rng, edge_keep=edge_keep)

    def evaluate(graph: CsrGraph):
        logits, acts = forward(graph)
        return float((logits * projection).sum()), _bool_arrays(acts, [])

    model.zero_grad()
    logits, acts = forward(g)
    base_masks = _bool_arrays(acts, [])
    input_grads = model.backward(g, acts, projection)

    # each target: (name, array holding the entry, analytic gradient, graph for that array)
    targets = []
    for p in model.parameters():
        targets.append((p.name, p.value, p.grad.copy(), lambda: g))
    for name, grad in (("node_features", input_grads.node_features),
                       ("edge_features", input_grads.edge_features)):
        working = getattr(g, name).copy()
        targets.append((name, working, grad,
                        lambda name=name, working=working: dataclasses.replace(g, **{name: working})))
    model.zero_grad()

    rows = []
    for name, array, analytic, graph_for in targets:
        rows.append(_check_tensor(name, array, analytic, graph_for, evaluate, base_masks,
                                  rng, samples_per_tensor, step, tolerance, atol))
        logger.debug("gradcheck %s", rows[-1])
    report = GradcheckReport(tolerance=tolerance, atol=atol, rows=rows,
                             passed=all(r.passed for r in rows))
    worst = report.worst()
    logger.info("gradcheck over %d tensors: %s (worst relative error %.3e in %s)",
                len(rows), "pass" if report.passed else "FAIL",
                worst.max_rel_error if worst else 0.0, worst.name if worst else "-")
    return report


def _check_tensor(name: str, array: np.ndarray, analytic: np.ndarray, graph_for: Callable,
                  evaluate: Callable,
                  base_masks: list, rng: np.random.Generator, samples: int, step: float,
                  tolerance: float, atol: float) -> GradcheckRow:
    size = array.size
    checked = skipped = 0
    max_abs = max_rel = 0.0
    passed = True
    for flat in rng.permutation(size).tolist():
        if checked >= samples:
            break
        index = np.unravel_index(flat, array.shape)
        original = array[index]
        array[index] = original + step
        plus, plus_masks = evaluate(graph_for())
        array[index] = original - step
        minus, minus_masks = evaluate(graph_for())
        array[index] = original
        if not (_same_masks(plus_masks, base_masks) and _same_masks(minus_masks, base_masks)):
            skipped += 1
            continue
        numeric = (plus - minus) / (2.0 * step)
        exact = float(analytic[index])
        abs_err = abs(exact - numeric)
        scale = max(abs(exact), abs(numeric))
        rel_err = abs_err / scale if scale > 0 else 0.0
        checked += 1
        max_abs = max(max_abs, abs_err)
        if abs_err > atol:
            max_rel = max(max_rel, rel_err)
            if rel_err > tolerance:
                passed = False
    if checked == 0 and skipped:
        # every sampled entry sat on a kink
        passed = False
    return GradcheckRow(name=name, checked=checked, skipped_kinks=skipped,
                        max_abs_error=max_abs, max_rel_error=max_rel, passed=passed)


def run_gradcheck(config: TrainConfig, nodes: int = 12, avg_degree: int = 3, layers: int = 2,
                  d_node: int = 8, d_edge: int = 8, num_labels: int = 4,
                  tolerance: float = 1e-4, samples_per_tensor: int = 16,
                  seed: Optional[int] = None) -> GradcheckReport:
    """Random graph plus a freshly initialised model built from config's widths."""
    if not 1 <= nodes <= MAX_NODES:
        raise ShapeError(f"gradcheck needs 1 <= nodes <= {MAX_NODES}, got {nodes}")
    seed = config.seed if seed is None else seed
    config = config.with_overrides(num_gipa_layers=layers, seed=seed)
    g = random_graph(nodes, avg_degree, d_node, d_edge, seed)
    model = GipaModel.from_config(config, d_node, d_edge, num_labels, np.random.default_rng(seed))
    return gradient_check(model, g, tolerance=tolerance,
                          samples_per_tensor=samples_per_tensor, seed=seed)
