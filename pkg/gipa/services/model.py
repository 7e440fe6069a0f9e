import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from gipa.exceptions import ShapeError
from gipa.graph import CsrGraph
from gipa.services.layer import (
    GipaLayerParams,
    InputGradients,
    LayerActivations,
    layer_backward,
    layer_forward,
)
from gipa.services.nn import DenseMatrix, Mlp, MlpSpec, Parameter, dropout, dropout_backward
from gipa.utils.validate import check_rate

logger = logging.getLogger(__name__)

# aggregation MLP depth; the hidden width comes from config.hidden_units
AGG_MLP_DEPTH = 2


@dataclass
class StackActivations:
    layers: List[LayerActivations]
    classifier_input: DenseMatrix
    final_mask: Optional[np.ndarray]
    classifier_cache: list


def check_width_chain(layers: List[GipaLayerParams], classifier: Mlp) -> None:
    if not layers:
        raise ShapeError("a GIPA stack needs at least one layer")
    for k in range(1, len(layers)):
        if layers[k].d_in != layers[k - 1].d_out:
            raise ShapeError(
                f"layer {k} expects {layers[k].d_in} input columns, "
                f"layer {k - 1} emits {layers[k - 1].d_out}")
    if classifier.spec.in_width != layers[-1].d_out:
        raise ShapeError(
            f"classifier expects {classifier.spec.in_width} columns, "
            f"last layer emits {layers[-1].d_out}")


def stack_forward(g: CsrGraph, layers: List[GipaLayerParams], classifier: Mlp,
                  training: bool = False, rng: Optional[np.random.Generator] = None,
                  final_dropout: float = 0.0, edge_keep: Optional[np.ndarray] = None):
    """Runs node features through every layer, then dropout + the FC classifier.
    Each layer re-projects the raw edge features with its own edge_proj."""
    check_width_chain(layers, classifier)
    h = g.node_features
    acts = []
    for params in layers:
        h, layer_acts = layer_forward(g, params, training, rng, node_features=h,
                                      edge_keep=edge_keep)
        acts.append(layer_acts)
    cls_in, final_mask = dropout(h, final_dropout, rng, training)
    logits, cls_cache = classifier.forward(cls_in, training, rng)
    return logits, StackActivations(acts, cls_in, final_mask, cls_cache)


def stack_backward(g: CsrGraph, layers: List[GipaLayerParams], classifier: Mlp,
                   acts: StackActivations, grad_logits: DenseMatrix) -> InputGradients:
    grad = dropout_backward(classifier.backward(grad_logits, acts.classifier_cache),
                            acts.final_mask)
    grad_edges = np.zeros_like(g.edge_features)
    for params, layer_acts in zip(reversed(layers), reversed(acts.layers)):
        grads = layer_backward(g, params, layer_acts, grad)
        grad = grads.node_features
        grad_edges += grads.edge_features
    return InputGradients(grad, grad_edges)


class GipaModel:
    """A stack of GIPA layers followed by a fully-connected label classifier."""

    def __init__(self, layers: List[GipaLayerParams], classifier: Mlp, final_dropout: float = 0.0):
        check_width_chain(layers, classifier)
        self.layers = layers
        self.classifier = classifier
        self.final_dropout = check_rate(final_dropout, "final dropout")

    @classmethod
    def from_config(cls, config, d_node: int, d_edge: int, num_labels: int,
                    rng: np.random.Generator) -> "GipaModel":
        layers = []
        d_in = d_node
        for k in range(config.num_gipa_layers):
            layers.append(GipaLayerParams.init(
                d_in=d_in, d_edge=d_edge, d_h=config.node_emb, d_e=config.edge_emb,
                d_out=config.node_emb, heads=config.heads, hidden=config.hidden_units,
                rng=rng, name=f"layer{k}",
                att_depth=config.att_mlp_depth, prop_depth=config.prop_mlp_depth,
                agg_depth=AGG_MLP_DEPTH,
                node_dropout=config.node_dropout, att_dropout=config.attention_dropout,
                prop_dropout=config.propagation_dropout,
                agg_dropout=config.aggregation_dropout,
                aggregation=config.aggregation,
                ablate_edge_propagation=config.ablate_edge_propagation,
            ))
            d_in = config.node_emb
        spec = MlpSpec.build(config.node_emb, config.hidden_units, num_labels, depth=1)
        classifier = Mlp.init(spec, rng, "classifier")
        logger.info("built %d-layer GIPA model with %d parameter tensors",
                    len(layers), sum(len(l.parameters()) for l in layers) + len(classifier.parameters()))
        return cls(layers, classifier, config.final_dropout)

    @property
    def num_labels(self) -> int:
        return self.classifier.spec.out_width

    def parameters(self) -> List[Parameter]:
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        params.extend(self.classifier.parameters())
        return params

    def named_parameters(self) -> Dict[str, Parameter]:
        named = {}
        for p in self.parameters():
            if p.name in named:
                raise ShapeError(f"duplicate parameter name {p.name}")
            named[p.name] = p
        return named

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, g: CsrGraph, training: bool = False,
                rng: Optional[np.random.Generator] = None,
                edge_keep: Optional[np.ndarray] = None):
        return stack_forward(g, self.layers, self.classifier, training, rng,
                             self.final_dropout, edge_keep)

    def backward(self, g: CsrGraph, acts: StackActivations,
                 grad_logits: DenseMatrix) -> InputGradients:
        return stack_backward(g, self.layers, self.classifier, acts, grad_logits)
