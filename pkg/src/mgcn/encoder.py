"""Graph encoders: per-graph GCN, MGCN layer with aggregation, stacking.

Shapes: node representations are ``(N, d)`` matrices; a graph is an
``(E, 2)`` array of (source, target) edges. A message from node ``i`` to
``j`` is ``x_i @ W + b``; each node sums the messages it receives and the
result goes through ReLU. Nodes that receive nothing in a graph get the
zero vector from that graph.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .graphs import ALL_LABELS, NodeKind

AGGREGATIONS = ("sum", "avg", "conv")


@dataclass
class BasicEncoderParams:
    W: ad.Tensor
    b: ad.Tensor


@dataclass
class LeviEncoderParams:
    """One weight/bias pair per direction: along the edge, against it, self."""

    incoming: BasicEncoderParams
    outgoing: BasicEncoderParams
    self_loop: BasicEncoderParams


@dataclass
class MgcnLayerParams:
    graphs: dict
    aggregation: str = "sum"
    conv_W: ad.Tensor = None
    conv_b: ad.Tensor = None


def _in_degree_weights(edges, num_nodes):
    deg = np.bincount(edges[:, 1], minlength=num_nodes).astype(np.float64)
    return 1.0 / deg[edges[:, 1]]


def node_token_ids(nodes, vocab):
    """Token ids for each node label; the global node maps to its reserved token."""
    from .tokenize import tokenize

    out = []
    for node in nodes:
        if node.kind == NodeKind.GLOBAL:
            out.append([vocab.global_id])
            continue
        ids = [vocab.index(t) for t in tokenize(node.label)]
        out.append(ids or [vocab.unk_id])
    return out


def mean_pool_index(token_ids):
    """Flat token ids plus (position -> node) edges and 1/k weights for mean pooling."""
    flat, edges, weights = [], [], []
    for node, ids in enumerate(token_ids):
        for tok in ids:
            edges.append((len(flat), node))
            weights.append(1.0 / len(ids))
            flat.append(tok)
    return np.array(flat, dtype=np.int64), np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(weights)


def init_node_embeddings(nodes, embedding, vocab):
    """Each row is the mean embedding of the node label's tokens (unknown -> unk)."""
    flat, edges, weights = mean_pool_index(node_token_ids(nodes, vocab))
    return pooled_embeddings(embedding, flat, edges, weights, len(nodes))


def pooled_embeddings(embedding, flat, edges, weights, num_nodes):
    rows = ad.gather_rows(embedding, flat)
    return ad.sparse_adj_matmul(edges, rows, num_nodes=num_nodes, weights=weights)


def _check(h, W, b):
    d = W.shape[0]
    if h.shape[1] != d or W.shape != (d, d) or b.shape != (d,):
        raise ShapeError(f"basic_encode: incompatible shapes H{h.shape}, W{W.shape}, b{b.shape}")


def _messages(edges, h, p, num_nodes, normalize):
    weights = _in_degree_weights(edges, num_nodes) if normalize and len(edges) else None
    return ad.sparse_adj_matmul(edges, ad.matmul(h, p.W) + p.b, num_nodes=num_nodes, weights=weights)


def basic_encode(edges, h, params, normalize=False):
    """One graph's GCN: ``ReLU(sum over incoming edges of x_i @ W + b)``."""
    h = ad.as_tensor(h)
    _check(h, params.W, params.b)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return ad.relu(_messages(edges, h, params, h.shape[0], normalize))


def levi_encode(edges, h, params, normalize=False):
    """Three-direction GCN over a Levi graph (in-edges, out-edges, self)."""
    h = ad.as_tensor(h)
    for p in (params.incoming, params.outgoing, params.self_loop):
        _check(h, p.W, p.b)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = h.shape[0]
    total = _messages(edges, h, params.incoming, n, normalize)
    total = total + _messages(edges[:, ::-1], h, params.outgoing, n, normalize)
    total = total + (ad.matmul(h, params.self_loop.W) + params.self_loop.b)
    return ad.relu(total)


def aggregate(parts, kind, conv_W=None, conv_b=None):
    """Merge per-graph representations (in label order) into one."""
    if not parts:
        raise ValueError("aggregation over an empty graph set")
    if kind == "conv":
        return ad.conv_stack(conv_W, parts, conv_b)
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    if kind == "sum":
        return out
    if kind == "avg":
        return ad.div(out, float(len(parts)))
    raise ValueError(f"unknown aggregation {kind!r} (expected one of {AGGREGATIONS})")


def active_labels(mg):
    return [l for l in ALL_LABELS if l in mg.labels]


def mgcn_layer(mg, h, params, normalize=False):
    """Run one basic encoder per active graph of ``mg`` and aggregate."""
    labels = active_labels(mg)
    if not labels:
        raise ValueError("mgcn_layer needs at least one graph")
    parts = [basic_encode(mg.adjacency[l], h, params.graphs[l], normalize) for l in labels]
    conv_W = None
    if params.aggregation == "conv":
        rows = np.array([ALL_LABELS.index(l) for l in labels])
        conv_W = params.conv_W if len(rows) == len(ALL_LABELS) else ad.gather_rows(params.conv_W, rows)
    return aggregate(parts, params.aggregation, conv_W, params.conv_b)


def stack_layers(h0, layers, layer_fn):
    """Apply ``layer_fn(h, params)`` for each layer; concatenate h1..hn by column."""
    if not layers:
        raise ValueError("stack_layers needs at least one layer")
    outputs = []
    h = h0
    for params in layers:
        h = layer_fn(h, params)
        outputs.append(h)
    return outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=1)


def encode_multigraph(mg, h0, layers, normalize=False):
    return stack_layers(h0, layers, lambda h, p: mgcn_layer(mg, h, p, normalize))


def encode_levi(levi, h0, layers, normalize=False):
    return stack_layers(h0, layers, lambda h, p: levi_encode(levi.edges, h, p, normalize))
