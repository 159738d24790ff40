"""The MGCN graph-to-text model: parameters, batched encoding, loss, generation."""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import decoder as dec
from .encoder import (
    BasicEncoderParams,
    LeviEncoderParams,
    MgcnLayerParams,
    encode_levi,
    encode_multigraph,
    mean_pool_index,
    node_token_ids,
    pooled_embeddings,
)
from .graphs import ALL_LABELS, LeviGraph, keep_graphs, to_levi, to_multigraph


@dataclass
class PreparedGraph:
    """Index arrays for one graph, ready to be batched."""

    num_nodes: int
    token_ids: np.ndarray
    pool_edges: np.ndarray
    pool_weights: np.ndarray
    edges: dict  # label (or "levi") -> (E, 2) array
    target: np.ndarray = None  # token ids including the final eos


def _block_union(graphs):
    """Merge prepared graphs into one disjoint graph; returns merged parts and offsets."""
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
    tok_offsets = np.cumsum([0] + [len(g.token_ids) for g in graphs])
    token_ids = np.concatenate([g.token_ids for g in graphs])
    pool_edges = np.concatenate(
        [g.pool_edges + np.array([tok_offsets[i], offsets[i]]) for i, g in enumerate(graphs)]
    )
    pool_weights = np.concatenate([g.pool_weights for g in graphs])
    edges = {}
    for key in graphs[0].edges:
        edges[key] = np.concatenate([g.edges[key] + offsets[i] for i, g in enumerate(graphs)]).reshape(-1, 2)
    return token_ids, pool_edges, pool_weights, edges, offsets


class _UnionGraph:
    """Duck-typed stand-in for a MultiGraph inside the encoder."""

    def __init__(self, adjacency, labels, num_nodes):
        self.adjacency = adjacency
        self.labels = labels
        self.num_nodes = num_nodes


class MGCNModel:
    def __init__(self, config, vocab, params):
        self.config = config
        self.vocab = vocab
        self.params = params
        self._build_views()

    # -- construction ------------------------------------------------------------------

    @classmethod
    def create(cls, config, vocab):
        """Fresh parameters drawn from ``config.seed``.

        Weights are uniform in ``[-init_scale, init_scale]``, the embedding
        table uniform in ``[-embed_scale, embed_scale]``; conv aggregation
        weights start at 1 and their bias at 0 (i.e. as a plain sum).
        """
        rng = np.random.default_rng(config.seed)
        s = config.init_scale
        params = OrderedDict()

        def new(name, shape, fill=None, scale=s):
            data = np.full(shape, fill, dtype=np.float64) if fill is not None else rng.uniform(-scale, scale, size=shape)
            params[name] = ad.Parameter(data, name)

        d, n = config.hidden, config.layers
        wide = n * d
        # the tied table also scales the output logits, hence its own range
        new("embedding", (len(vocab), d), scale=config.embed_scale)
        for k in range(n):
            if config.encoder == "levi":
                for direction in ("in", "out", "self"):
                    new(f"enc.{k}.levi.{direction}.W", (d, d))
                    new(f"enc.{k}.levi.{direction}.b", (d,))
            else:
                for label in config.active_labels:
                    new(f"enc.{k}.{label.value}.W", (d, d))
                    new(f"enc.{k}.{label.value}.b", (d,))
                if config.aggregation == "conv":
                    new(f"enc.{k}.conv.W", (len(ALL_LABELS), d), fill=1.0)
                    new(f"enc.{k}.conv.b", (d,), fill=0.0)
        in1 = d + wide if config.input_feeding else d
        for layer, width in (("lstm1", in1), ("lstm2", d)):
            new(f"dec.{layer}.Wx", (width, 4 * d))
            new(f"dec.{layer}.Wh", (d, 4 * d))
            new(f"dec.{layer}.b", (4 * d,))
        new("dec.attn.W", (d, wide))
        new("dec.comb.W", (d + wide, d))
        new("dec.comb.b", (d,))
        new("dec.bridge.W", (wide, 2 * d))
        new("dec.bridge.b", (2 * d,))
        return cls(config, vocab, params)

    def _build_views(self):
        p, c = self.params, self.config
        self.layers = []
        for k in range(c.layers):
            if c.encoder == "levi":
                pair = lambda dr: BasicEncoderParams(p[f"enc.{k}.levi.{dr}.W"], p[f"enc.{k}.levi.{dr}.b"])
                self.layers.append(LeviEncoderParams(pair("in"), pair("out"), pair("self")))
            else:
                graphs = {
                    l: BasicEncoderParams(p[f"enc.{k}.{l.value}.W"], p[f"enc.{k}.{l.value}.b"])
                    for l in c.active_labels
                }
                self.layers.append(
                    MgcnLayerParams(graphs, c.aggregation, p.get(f"enc.{k}.conv.W"), p.get(f"enc.{k}.conv.b"))
                )
        lstm = lambda name: dec.LSTMParams(p[f"dec.{name}.Wx"], p[f"dec.{name}.Wh"], p[f"dec.{name}.b"])
        self.decoder = dec.DecoderParams(
            embedding=p["embedding"],
            lstm1=lstm("lstm1"),
            lstm2=lstm("lstm2"),
            attn_W=p["dec.attn.W"],
            comb_W=p["dec.comb.W"],
            comb_b=p["dec.comb.b"],
            bridge_W=p["dec.bridge.W"],
            bridge_b=p["dec.bridge.b"],
            input_feeding=c.input_feeding,
        )

    @property
    def embedding(self):
        return self.params["embedding"]

    def parameters(self):
        return list(self.params.values())

    # -- graphs --------------------------------------------------------------------------

    def graph_for(self, instance):
        if self.config.encoder == "levi":
            return to_levi(instance.triples)
        return keep_graphs(to_multigraph(instance.triples), self.config.active_labels)

    def prepare(self, graph, target_tokens=None):
        flat, pool_edges, pool_weights = mean_pool_index(node_token_ids(graph.nodes, self.vocab))
        if isinstance(graph, LeviGraph):
            edges = {"levi": graph.edges}
        else:
            edges = {l: graph.adjacency[l] for l in self.config.active_labels}
        target = None
        if target_tokens is not None:
            target = np.array(self.vocab.encode(target_tokens) + [self.vocab.eos_id], dtype=np.int64)
        return PreparedGraph(len(graph.nodes), flat, pool_edges, pool_weights, edges, target)

    def prepare_instance(self, instance, with_target=True):
        return self.prepare(self.graph_for(instance), instance.tokens if with_target else None)

    # -- forward -----------------------------------------------------------------------

    def encode(self, batch):
        """Encode prepared graphs; returns ``(memory (B, N, D), mask (B, N))``."""
        token_ids, pool_edges, pool_weights, edges, offsets = _block_union(batch)
        total = int(offsets[-1])
        h0 = pooled_embeddings(self.embedding, token_ids, pool_edges, pool_weights, total)
        if self.config.encoder == "levi":
            h_final = encode_levi(LeviGraph(nodes=[None] * total, edges=edges["levi"]), h0, self.layers, self.config.normalize)
        else:
            union = _UnionGraph(edges, self.config.active_labels, total)
            h_final = encode_multigraph(union, h0, self.layers, self.config.normalize)
        width = h_final.shape[1]
        longest = max(g.num_nodes for g in batch)
        index = np.full((len(batch), longest), total, dtype=np.int64)
        mask = np.zeros((len(batch), longest), dtype=bool)
        for i, g in enumerate(batch):
            index[i, : g.num_nodes] = np.arange(offsets[i], offsets[i + 1])
            mask[i, : g.num_nodes] = True
        padded = ad.concat([h_final, ad.Tensor(np.zeros((1, width)))], axis=0)
        return ad.gather_rows(padded, index), mask

    def batch_loss(self, batch):
        """Summed NLL over a batch of prepared graphs with targets; returns (loss, n_tokens)."""
        memory, mask = self.encode(batch)
        longest = max(len(g.target) for g in batch)
        inputs = np.full((len(batch), longest), self.vocab.pad_id, dtype=np.int64)
        targets = np.full((len(batch), longest), self.vocab.pad_id, dtype=np.int64)
        tmask = np.zeros((len(batch), longest))
        for i, g in enumerate(batch):
            T = len(g.target)
            targets[i, :T] = g.target
            inputs[i, 0] = self.vocab.bos_id
            inputs[i, 1:T] = g.target[: T - 1]
            tmask[i, :T] = 1.0
        loss = dec.sequence_nll(self.decoder, memory, mask, inputs, targets, tmask)
        return loss, int(tmask.sum())

    def nll_loss(self, instance):
        """Teacher-forced ``-sum_t log p(y_t | y_<t, graph)`` including eos."""
        if not instance.tokens:
            raise ValueError("empty reference text")
        loss, _ = self.batch_loss([self.prepare_instance(instance)])
        return loss

    # -- generation --------------------------------------------------------------------

    def search(self, prepared, beam=None, max_len=None):
        beam = self.config.beam if beam is None else beam
        max_len = self.config.max_len if max_len is None else max_len
        with ad.no_grad():
            memory, mask = self.encode([prepared])
        step = dec.model_step_fn(self.decoder, memory, mask)
        start = dec.start_arrays(self.decoder, memory, mask)
        return dec.beam_search(step, start, self.vocab.bos_id, self.vocab.eos_id, beam, max_len)

    def decode_tokens(self, hyp):
        ids = [t for t in hyp.tokens if t != self.vocab.eos_id]
        return self.vocab.decode(ids)

    def generate_tokens(self, graph, beam=None, max_len=None):
        return self.decode_tokens(self.search(self.prepare(graph), beam, max_len))

    # -- state -----------------------------------------------------------------------------

    def state_arrays(self):
        return OrderedDict((name, p.data.copy()) for name, p in self.params.items())

    def load_arrays(self, arrays):
        if list(arrays) != list(self.params):
            raise ValueError("parameter names do not match the model layout")
        for name, arr in arrays.items():
            if arr.shape != self.params[name].shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {self.params[name].shape}")
            self.params[name].data[...] = arr
