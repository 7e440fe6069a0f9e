"""One GIPA layer: attention, propagation and aggregation over a CsrGraph.

Shapes used throughout: n nodes, E active directed entries, E_u undirected
edge rows, d_h node embedding width, d_e edge embedding width, H heads.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from gipa.exceptions import ShapeError
from gipa.graph import CsrGraph
from gipa.services.nn import (
    DenseMatrix,
    Mlp,
    MlpSpec,
    Parameter,
    concat_cols,
    dropout,
    dropout_backward,
    glorot_uniform,
    linear,
    linear_backward,
    split_cols,
)
from gipa.utils.validate import check_divisible, check_rate, check_shape

logger = logging.getLogger(__name__)

AGGREGATIONS = ("sum", "mean")


@dataclass
class GipaLayerParams:
    node_proj: Parameter
    edge_proj: Parameter
    att_mlp: Mlp
    prop_mlp: Mlp
    agg_mlp: Mlp
    res_proj: Parameter
    heads: int
    node_dropout: float = 0.0
    aggregation: str = "sum"
    ablate_edge_propagation: bool = False

    def __post_init__(self):
        d_h, d_e = self.d_h, self.d_e
        check_divisible(d_h, self.heads)
        check_rate(self.node_dropout, "node dropout")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        att, prop, agg = self.att_mlp.spec, self.prop_mlp.spec, self.agg_mlp.spec
        if any(att.use_bias):
            raise ShapeError("the attention MLP carries no bias")
        expected = {
            "att_mlp": ((att.in_width, att.out_width), (2 * d_h + d_e, self.heads)),
            "prop_mlp": ((prop.in_width, prop.out_width), (d_h + d_e, d_h)),
            "agg_mlp": ((agg.in_width,), (2 * d_h,)),
        }
        for name, (got, want) in expected.items():
            if got != want:
                raise ShapeError(f"{name} widths {got} do not match {want}")
        check_shape(self.res_proj.value, (d_h, d_h), self.res_proj.name)

    @property
    def d_in(self) -> int:
        return self.node_proj.shape[0]

    @property
    def d_h(self) -> int:
        return self.node_proj.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_proj.shape[0]

    @property
    def d_e(self) -> int:
        return self.edge_proj.shape[1]

    @property
    def d_out(self) -> int:
        return self.agg_mlp.spec.out_width

    @classmethod
    def init(cls, d_in: int, d_edge: int, d_h: int, d_e: int, d_out: int, heads: int,
             hidden: int, rng: np.random.Generator, name: str = "layer",
             att_depth: int = 2, prop_depth: int = 2, agg_depth: int = 2,
             node_dropout: float = 0.0, att_dropout: float = 0.0,
             prop_dropout: float = 0.0, agg_dropout: float = 0.0,
             aggregation: str = "sum", ablate_edge_propagation: bool = False) -> "GipaLayerParams":
        att = MlpSpec.build(2 * d_h + d_e, hidden, heads, att_depth, bias=False,
                            dropout_rate=att_dropout)
        prop = MlpSpec.build(d_h + d_e, hidden, d_h, prop_depth, dropout_rate=prop_dropout)
        agg = MlpSpec.build(2 * d_h, hidden, d_out, agg_depth, dropout_rate=agg_dropout)
        return cls(
            node_proj=glorot_uniform(f"{name}.node_proj", d_in, d_h, rng),
            edge_proj=glorot_uniform(f"{name}.edge_proj", d_edge, d_e, rng),
            att_mlp=Mlp.init(att, rng, f"{name}.att_mlp"),
            prop_mlp=Mlp.init(prop, rng, f"{name}.prop_mlp"),
            agg_mlp=Mlp.init(agg, rng, f"{name}.agg_mlp"),
            res_proj=glorot_uniform(f"{name}.res_proj", d_h, d_h, rng),
            heads=heads,
            node_dropout=node_dropout,
            aggregation=aggregation,
            ablate_edge_propagation=ablate_edge_propagation,
        )

    def parameters(self) -> List[Parameter]:
        return ([self.node_proj, self.edge_proj]
                + self.att_mlp.parameters()
                + self.prop_mlp.parameters()
                + self.agg_mlp.parameters()
                + [self.res_proj])


@dataclass(frozen=True)
class EdgeIndex:
    """The directed entries a forward pass runs over (all of them, or the
    survivors of an edge drop), as parallel destination/source/edge-id arrays."""
    num_nodes: int
    dst: np.ndarray
    src: np.ndarray
    eid: np.ndarray

    @classmethod
    def from_graph(cls, g: CsrGraph, keep: Optional[np.ndarray] = None) -> "EdgeIndex":
        if keep is None:
            return cls(g.num_nodes, g.row_indices, g.col_indices, g.edge_ids)
        keep = np.asarray(keep, dtype=bool)
        if keep.shape != (g.num_edges,):
            raise ShapeError(f"edge keep mask has shape {keep.shape}, expected ({g.num_edges},)")
        active = np.flatnonzero(keep)
        return cls(g.num_nodes, g.row_indices[active], g.col_indices[active], g.edge_ids[active])

    @property
    def num_edges(self) -> int:
        return int(self.dst.shape[0])


def segment_sum(values: DenseMatrix, segment_ids: np.ndarray, num_segments: int) -> DenseMatrix:
    out = np.zeros((num_segments, values.shape[1]))
    np.add.at(out, segment_ids, values)
    return out


def segment_softmax(scores: DenseMatrix, segment_ids: np.ndarray, num_segments: int) -> DenseMatrix:
    """Column-wise softmax within each segment, max-shifted for stability."""
    seg_max = np.full((num_segments, scores.shape[1]), -np.inf)
    np.maximum.at(seg_max, segment_ids, scores)
    shifted = np.exp(scores - seg_max[segment_ids])
    return shifted / segment_sum(shifted, segment_ids, num_segments)[segment_ids]


def segment_softmax_backward(a: DenseMatrix, grad_a: DenseMatrix, segment_ids: np.ndarray,
                             num_segments: int) -> DenseMatrix:
    # (diag(a) - a a^T) g, per segment and column
    inner = segment_sum(a * grad_a, segment_ids, num_segments)
    return a * (grad_a - inner[segment_ids])


def project_inputs(g: CsrGraph, params: GipaLayerParams, training: bool = False,
                   rng: Optional[np.random.Generator] = None,
                   node_features: Optional[DenseMatrix] = None):
    """Returns (h_tilde, e_tilde, node_dropout_mask)."""
    x = g.node_features if node_features is None else node_features
    check_shape(x, (g.num_nodes, params.d_in), "layer node input")
    h_tilde, node_mask = dropout(linear(x, params.node_proj), params.node_dropout, rng, training)
    e_tilde = linear(g.edge_features, params.edge_proj)
    return h_tilde, e_tilde, node_mask


def attention_scores(edges: EdgeIndex, h_tilde: DenseMatrix, e_tilde: DenseMatrix,
                     params: GipaLayerParams, training: bool = False,
                     rng: Optional[np.random.Generator] = None):
    """Raw per-head scores MLP([h_i || h_j || e_ij]) for every active entry."""
    triple = concat_cols([h_tilde[edges.dst], h_tilde[edges.src], e_tilde[edges.eid]])
    return params.att_mlp.forward(triple, training, rng)


def edge_softmax(edges: EdgeIndex, scores: DenseMatrix) -> DenseMatrix:
    return segment_softmax(scores, edges.dst, edges.num_nodes)


def propagate(edges: EdgeIndex, h_tilde: DenseMatrix, e_tilde: DenseMatrix,
              params: GipaLayerParams, training: bool = False,
              rng: Optional[np.random.Generator] = None):
    edge_part = e_tilde[edges.eid]
    if params.ablate_edge_propagation:
        edge_part = np.zeros_like(edge_part)
    return params.prop_mlp.forward(concat_cols([h_tilde[edges.src], edge_part]), training, rng)


def fuse_message(a: DenseMatrix, p: DenseMatrix, heads: int) -> DenseMatrix:
    """Scale head b's contiguous block of p by that head's attention weight."""
    block = check_divisible(p.shape[1], heads)
    check_shape(a, (p.shape[0], heads), "attention weights")
    e = p.shape[0]
    return (p.reshape(e, heads, block) * a[:, :, None]).reshape(e, heads * block)


def fuse_message_backward(grad_m: DenseMatrix, a: DenseMatrix, p: DenseMatrix,
                          heads: int) -> Tuple[DenseMatrix, DenseMatrix]:
    """Returns (grad_a, grad_p)."""
    e, width = p.shape
    block = check_divisible(width, heads)
    grad_blocks = grad_m.reshape(e, heads, block)
    grad_a = (grad_blocks * p.reshape(e, heads, block)).sum(axis=2)
    grad_p = (grad_blocks * a[:, :, None]).reshape(e, width)
    return grad_a, grad_p


def _aggregation_divisor(edges: EdgeIndex, aggregation: str) -> Optional[np.ndarray]:
    if aggregation == "sum":
        return None
    counts = np.bincount(edges.dst, minlength=edges.num_nodes).astype(np.float64)
    return np.maximum(counts, 1.0)[:, None]


def aggregate(edges: EdgeIndex, m: DenseMatrix, h_tilde: DenseMatrix,
              params: GipaLayerParams, training: bool = False,
              rng: Optional[np.random.Generator] = None):
    """Returns (o, node_messages, h_hat, agg_cache)."""
    node_messages = segment_sum(m, edges.dst, edges.num_nodes)
    divisor = _aggregation_divisor(edges, params.aggregation)
    if divisor is not None:
        node_messages = node_messages / divisor
    h_hat = linear(h_tilde, params.res_proj)
    o, agg_cache = params.agg_mlp.forward(concat_cols([node_messages, h_hat]), training, rng)
    return o, node_messages, h_hat, agg_cache


@dataclass
class LayerActivations:
    edges: EdgeIndex
    node_input: DenseMatrix
    h_tilde: DenseMatrix
    e_tilde: DenseMatrix
    scores: DenseMatrix
    attention: DenseMatrix
    propagated: DenseMatrix
    messages: DenseMatrix
    node_messages: DenseMatrix
    h_hat: DenseMatrix
    output: DenseMatrix
    node_mask: Optional[np.ndarray]
    att_cache: list
    prop_cache: list
    agg_cache: list


@dataclass
class InputGradients:
    node_features: DenseMatrix
    edge_features: DenseMatrix


def layer_forward(g: CsrGraph, params: GipaLayerParams, training: bool = False,
                  rng: Optional[np.random.Generator] = None,
                  node_features: Optional[DenseMatrix] = None,
                  edge_keep: Optional[np.ndarray] = None) -> Tuple[DenseMatrix, LayerActivations]:
    edges = EdgeIndex.from_graph(g, edge_keep)
    node_input = g.node_features if node_features is None else node_features
    h_tilde, e_tilde, node_mask = project_inputs(g, params, training, rng, node_input)
    scores, att_cache = attention_scores(edges, h_tilde, e_tilde, params, training, rng)
    a = edge_softmax(edges, scores)
    p, prop_cache = propagate(edges, h_tilde, e_tilde, params, training, rng)
    m = fuse_message(a, p, params.heads)
    o, node_messages, h_hat, agg_cache = aggregate(edges, m, h_tilde, params, training, rng)
    acts = LayerActivations(
        edges=edges, node_input=node_input, h_tilde=h_tilde, e_tilde=e_tilde,
        scores=scores, attention=a, propagated=p, messages=m,
        node_messages=node_messages, h_hat=h_hat, output=o, node_mask=node_mask,
        att_cache=att_cache, prop_cache=prop_cache, agg_cache=agg_cache,
    )
    return o, acts


def layer_backward(g: CsrGraph, params: GipaLayerParams, acts: LayerActivations,
                   grad_o: DenseMatrix) -> InputGradients:
    """Accumulates every parameter gradient of the layer and returns the
    gradients w.r.t. the node input and the raw edge features."""
    if acts.edges.num_nodes != g.num_nodes:
        raise ShapeError("activations were recorded on a different graph")
    check_shape(grad_o, acts.output.shape, "output gradient")
    edges, d_h, d_e, n = acts.edges, params.d_h, params.d_e, g.num_nodes

    grad_agg_in = params.agg_mlp.backward(grad_o, acts.agg_cache)
    grad_node_messages, grad_h_hat = split_cols(grad_agg_in, [d_h, d_h])
    grad_h = linear_backward(grad_h_hat, acts.h_tilde, params.res_proj)

    divisor = _aggregation_divisor(edges, params.aggregation)
    if divisor is not None:
        grad_node_messages = grad_node_messages / divisor
    grad_m = grad_node_messages[edges.dst]
    grad_a, grad_p = fuse_message_backward(grad_m, acts.attention, acts.propagated, params.heads)

    grad_prop_in = params.prop_mlp.backward(grad_p, acts.prop_cache)
    grad_h_src, grad_e_prop = split_cols(grad_prop_in, [d_h, d_e])
    np.add.at(grad_h, edges.src, grad_h_src)
    grad_e = np.zeros_like(acts.e_tilde)
    if not params.ablate_edge_propagation:
        np.add.at(grad_e, edges.eid, grad_e_prop)

    grad_scores = segment_softmax_backward(acts.attention, grad_a, edges.dst, n)
    grad_att_in = params.att_mlp.backward(grad_scores, acts.att_cache)
    grad_h_dst, grad_h_nbr, grad_e_att = split_cols(grad_att_in, [d_h, d_h, d_e])
    np.add.at(grad_h, edges.dst, grad_h_dst)
    np.add.at(grad_h, edges.src, grad_h_nbr)
    np.add.at(grad_e, edges.eid, grad_e_att)

    grad_h = dropout_backward(grad_h, acts.node_mask)
    grad_x = linear_backward(grad_h, acts.node_input, params.node_proj)
    grad_edge_features = linear_backward(grad_e, g.edge_features, params.edge_proj)
    return InputGradients(grad_x, grad_edge_features)
