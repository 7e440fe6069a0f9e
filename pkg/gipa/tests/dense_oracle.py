"""Naive reference for the layer equations: explicit loops over every
(destination, source) node pair, one row at a time, straight from the raw
undirected edge list. Used only to check the sparse kernels."""
import numpy as np


def mlp_row(mlp, x):
    h = x
    last = len(mlp.weights) - 1
    for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = h @ w.value
        if b is not None:
            h = h + b.value[0]
        if k < last:
            h = np.maximum(h, 0.0)
    return h


def adjacency(num_nodes, edges):
    """(dst, src) -> list of raw feature rows; self-loops appear once."""
    table = {}
    for u, v, row in edges:
        row = np.asarray(row, dtype=np.float64)
        table.setdefault((v, u), []).append(row)
        if u != v:
            table.setdefault((u, v), []).append(row)
    return table


def layer(num_nodes, edges, x, params):
    table = adjacency(num_nodes, edges)
    heads, d_h = params.heads, params.d_h
    block = d_h // heads
    h = np.array([x[i] @ params.node_proj.value for i in range(num_nodes)])
    out = []
    for i in range(num_nodes):
        scores, props = [], []
        for j in range(num_nodes):
            for raw in table.get((i, j), []):
                e = raw @ params.edge_proj.value
                scores.append(mlp_row(params.att_mlp, np.concatenate([h[i], h[j], e])))
                edge_part = np.zeros_like(e) if params.ablate_edge_propagation else e
                props.append(mlp_row(params.prop_mlp, np.concatenate([h[j], edge_part])))
        m_i = np.zeros(d_h)
        if scores:
            scores = np.array(scores)
            weights = np.exp(scores - scores.max(axis=0))
            weights = weights / weights.sum(axis=0)
            for w_row, p_row in zip(weights, props):
                for b in range(heads):
                    m_i[b * block:(b + 1) * block] += w_row[b] * p_row[b * block:(b + 1) * block]
            if params.aggregation == "mean":
                m_i = m_i / len(props)
        h_hat = h[i] @ params.res_proj.value
        out.append(mlp_row(params.agg_mlp, np.concatenate([m_i, h_hat])))
    return np.array(out)


def stack(num_nodes, edges, x, model):
    h = np.asarray(x, dtype=np.float64)
    for params in model.layers:
        h = layer(num_nodes, edges, h, params)
    return np.array([mlp_row(model.classifier, h[i]) for i in range(num_nodes)])
