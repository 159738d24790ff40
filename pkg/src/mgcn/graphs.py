"""Multi-graph and Levi-graph transformations of a triple set.

Both transformations turn every triple occurrence into a relation node so
that predicates are embedded like entities. The multi-graph additionally
keeps explicit entity-to-entity edges (``default2``/``reverse2``), a
``self`` loop on every node and a ``global`` node broadcasting to all
others.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .kg import dedup_triples


class EdgeLabel(str, enum.Enum):
    SELF = "self"
    DEFAULT1 = "default1"
    REVERSE1 = "reverse1"
    DEFAULT2 = "default2"
    REVERSE2 = "reverse2"
    GLOBAL = "global"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            names = ", ".join(l.value for l in cls)
            raise ValueError(f"unknown graph label {value!r} (expected one of {names})") from None


ALL_LABELS = tuple(EdgeLabel)


class NodeKind(str, enum.Enum):
    ENTITY = "entity"
    RELATION = "relation"
    GLOBAL = "global"


@dataclass(frozen=True)
class Node:
    label: str
    kind: NodeKind
    triple_index: int = -1


def _empty_edges():
    return np.zeros((0, 2), dtype=np.int64)


@dataclass
class MultiGraph:
    """Node table plus one ``(E, 2)`` source/target edge array per label.

    ``labels`` lists the graphs still active; :func:`drop_graphs` removes
    labels and empties their edge arrays.
    """

    nodes: list
    adjacency: dict
    labels: tuple = ALL_LABELS

    @property
    def num_nodes(self):
        return len(self.nodes)

    def edges(self, label):
        return self.adjacency[EdgeLabel.parse(label)]

    def edge_set(self, label):
        return {(int(s), int(t)) for s, t in self.edges(label)}


@dataclass
class LeviGraph:
    nodes: list
    edges: np.ndarray = field(default_factory=_empty_edges)

    @property
    def num_nodes(self):
        return len(self.nodes)


def _entity_and_relation_nodes(triples):
    triples = dedup_triples(triples)
    if not triples:
        raise DataError("cannot transform an empty triple set")
    entity_pos = {}
    for t in triples:
        entity_pos.setdefault(t.subject, len(entity_pos))
        entity_pos.setdefault(t.object, len(entity_pos))
    nodes = [Node(e, NodeKind.ENTITY) for e in entity_pos]
    rel_pos = []
    for i, t in enumerate(triples):
        rel_pos.append(len(nodes))
        nodes.append(Node(t.predicate, NodeKind.RELATION, i))
    return triples, nodes, entity_pos, rel_pos


def _levi_edges(triples, entity_pos, rel_pos):
    edges = []
    for t, r in zip(triples, rel_pos):
        edges.append((entity_pos[t.subject], r))
        edges.append((r, entity_pos[t.object]))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def to_multigraph(triples):
    """Build the six-graph structure; node order is entities, relations, global."""
    triples, nodes, entity_pos, rel_pos = _entity_and_relation_nodes(triples)
    g = len(nodes)
    nodes.append(Node("<global>", NodeKind.GLOBAL))

    default1 = _levi_edges(triples, entity_pos, rel_pos)
    pairs = {}
    for t in triples:
        pairs.setdefault((entity_pos[t.subject], entity_pos[t.object]), None)
    default2 = np.array(list(pairs), dtype=np.int64).reshape(-1, 2)
    idx = np.arange(g + 1, dtype=np.int64)
    others = np.arange(g, dtype=np.int64)

    adjacency = {
        EdgeLabel.SELF: np.stack([idx, idx], axis=1),
        EdgeLabel.DEFAULT1: default1,
        EdgeLabel.REVERSE1: default1[:, ::-1].copy(),
        EdgeLabel.DEFAULT2: default2,
        EdgeLabel.REVERSE2: default2[:, ::-1].copy(),
        EdgeLabel.GLOBAL: np.stack([np.full(g, g, dtype=np.int64), others], axis=1),
    }
    return MultiGraph(nodes=nodes, adjacency=adjacency, labels=ALL_LABELS)


def to_levi(triples):
    """Levi graph: entities and per-triple relation nodes, original orientation only."""
    triples, nodes, entity_pos, rel_pos = _entity_and_relation_nodes(triples)
    return LeviGraph(nodes=nodes, edges=_levi_edges(triples, entity_pos, rel_pos))


def drop_graphs(mg, removed):
    """Return a copy of ``mg`` with the graphs in ``removed`` emptied."""
    removed = {EdgeLabel.parse(l) for l in removed}
    if EdgeLabel.SELF in removed:
        raise ValueError("the self graph cannot be removed")
    adjacency = {
        label: (_empty_edges() if label in removed else edges) for label, edges in mg.adjacency.items()
    }
    labels = tuple(l for l in mg.labels if l not in removed)
    return MultiGraph(nodes=list(mg.nodes), adjacency=adjacency, labels=labels)


def keep_graphs(mg, kept):
    kept = {EdgeLabel.parse(l) for l in kept}
    return drop_graphs(mg, [l for l in ALL_LABELS if l not in kept])


def permute_nodes(mg, perm):
    """Relabel nodes so that old node ``i`` moves to position ``perm[i]``.

    Edge lists keep their order; only endpoints are renamed.
    """
    perm = np.asarray(perm, dtype=np.int64)
    nodes = [None] * len(mg.nodes)
    for old, new in enumerate(perm):
        nodes[new] = mg.nodes[old]
    adjacency = {label: perm[edges] if len(edges) else edges for label, edges in mg.adjacency.items()}
    return MultiGraph(nodes=nodes, adjacency=adjacency, labels=mg.labels)


def validate(mg):
    """List every violated MultiGraph invariant (empty when well formed)."""
    problems = []
    n = mg.num_nodes
    globals_ = [i for i, node in enumerate(mg.nodes) if node.kind == NodeKind.GLOBAL]
    if globals_ != [n - 1]:
        problems.append(f"global-node: expected exactly one global node at index {n - 1}, found at {globals_}")
    rel_triples = [node.triple_index for node in mg.nodes if node.kind == NodeKind.RELATION]
    if len(set(rel_triples)) != len(rel_triples) or any(i < 0 for i in rel_triples):
        problems.append(f"relation-nodes: triple indices not one-to-one: {rel_triples}")

    for label, edges in mg.adjacency.items():
        bad = [(int(s), int(t)) for s, t in edges if not (0 <= s < n and 0 <= t < n)]
        if bad:
            problems.append(f"{label.value}: edges out of range {bad}")

    if EdgeLabel.SELF in mg.labels:
        self_edges = mg.edge_set(EdgeLabel.SELF)
        missing = sorted(set(range(n)) - {s for s, t in self_edges if s == t})
        extra = sorted((s, t) for s, t in self_edges if s != t)
        if missing:
            problems.append(f"self: missing self loops at nodes {missing}")
        if extra:
            problems.append(f"self: non-loop edges {extra}")

    for fwd, rev in ((EdgeLabel.DEFAULT1, EdgeLabel.REVERSE1), (EdgeLabel.DEFAULT2, EdgeLabel.REVERSE2)):
        if fwd in mg.labels and rev in mg.labels:
            expected = {(t, s) for s, t in mg.edge_set(fwd)}
            got = mg.edge_set(rev)
            if expected != got:
                diff = sorted(expected.symmetric_difference(got))
                problems.append(f"transpose: {rev.value} is not the transpose of {fwd.value}; offending edges {diff}")

    if EdgeLabel.GLOBAL in mg.labels and globals_:
        gi = globals_[-1]
        expected = {(gi, j) for j in range(n) if j != gi}
        got = mg.edge_set(EdgeLabel.GLOBAL)
        if expected != got:
            diff = sorted(expected.symmetric_difference(got))
            problems.append(f"global: edge set differs from global broadcast at {diff}")

    for label in ALL_LABELS:
        if label not in mg.labels and len(mg.adjacency.get(label, ())):
            problems.append(f"{label.value}: dropped graph still has edges")
    return problems


def dump_multigraph(mg):
    lines = ["nodes"]
    for i, node in enumerate(mg.nodes):
        lines.append(f"{i}\t{node.kind.value}\t{node.label}")
    for label in ALL_LABELS:
        edges = mg.adjacency[label]
        lines.append(f"edges {label.value} {len(edges)}")
        lines.extend(f"{s}\t{t}" for s, t in edges)
    return "\n".join(lines)


def dump_levi(levi):
    lines = ["nodes"]
    for i, node in enumerate(levi.nodes):
        lines.append(f"{i}\t{node.kind.value}\t{node.label}")
    lines.append(f"edges levi {len(levi.edges)}")
    lines.extend(f"{s}\t{t}" for s, t in levi.edges)
    return "\n".join(lines)
