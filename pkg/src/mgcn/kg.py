"""Triple store, entity-centric subgraph extraction, PageRank and corpora.

A :class:`KnowledgeGraph` is an immutable, insertion-ordered set of
:class:`Triple` values with an entity index over both subject and object
roles. :func:`extract_subgraph` gathers the neighbourhood of a main entity
plus every triple on a short undirected path to a topic entity, which is how
one :class:`Instance` input is assembled from a large KG.
"""

import json
import logging
import random
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .tokenize import tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        for name in ("subject", "predicate", "object"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise ValueError(f"triple field {name!r} is empty: {self!r}")

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))


def _as_triple(record, position):
    if isinstance(record, Triple):
        return record
    try:
        s, p, o = record
        return Triple(s, p, o)
    except (TypeError, ValueError) as exc:
        raise DataError(f"malformed triple {record!r}: {exc}", location=f"record {position}") from None


def dedup_triples(records):
    """Return a tuple of unique triples, first occurrence wins."""
    seen = {}
    for pos, record in enumerate(records):
        t = _as_triple(record, pos)
        seen.setdefault(t, None)
    return tuple(seen)


class KnowledgeGraph:
    """Immutable set of triples indexed by entity."""

    def __init__(self, triples):
        self._triples = dedup_triples(triples)
        index = {}
        for i, t in enumerate(self._triples):
            index.setdefault(t.subject, []).append(i)
            if t.object != t.subject:
                index.setdefault(t.object, []).append(i)
        self._index = {e: tuple(ids) for e, ids in index.items()}

    @property
    def triples(self):
        return self._triples

    @property
    def entities(self):
        """Entity labels in first-occurrence order."""
        return tuple(self._index)

    def __len__(self):
        return len(self._triples)

    def __contains__(self, entity):
        return entity in self._index

    def incident(self, entity):
        """Indices of triples mentioning ``entity`` in either role."""
        return self._index.get(entity, ())

    def neighbors(self, entity):
        """Undirected neighbours of ``entity`` (excluding itself)."""
        out = {}
        for i in self.incident(entity):
            t = self._triples[i]
            other = t.object if t.subject == entity else t.subject
            if other != entity:
                out.setdefault(other, None)
        return tuple(out)


def build_graph(triples):
    """Deduplicate ``triples`` and build the entity index.

    Records may be :class:`Triple` or any 3-sequence of strings; a record
    with an empty field raises :class:`DataError` naming its position.
    """
    return KnowledgeGraph(triples)


def extract_subgraph(kg, main, topics, max_hops=2):
    """Collect the input triple set for describing ``main``.

    Returns ``(triples, skipped)``: the triples incident to ``main`` together
    with every triple on an undirected simple path of at most ``max_hops``
    edges from ``main`` to a topic entity, in KG order; and the topic
    entities that were not found in ``kg``.
    """
    if main not in kg:
        raise DataError(f"main entity {main!r} not in knowledge graph")
    if max_hops not in (1, 2):
        raise ValueError(f"max_hops must be 1 or 2, got {max_hops}")

    selected = set(kg.incident(main))
    skipped = []
    topic_set = set()
    for topic in topics:
        if topic not in kg:
            skipped.append(topic)
            continue
        if topic != main:
            topic_set.add(topic)
    if skipped:
        warnings.warn(f"topic entities not in knowledge graph: {skipped}", stacklevel=2)

    if max_hops == 2 and topic_set:
        # 1-hop paths are already incident to main; 2-hop paths add the
        # far edge X - T for every neighbour X of main.
        for x in kg.neighbors(main):
            for i in kg.incident(x):
                t = kg.triples[i]
                other = t.object if t.subject == x else t.subject
                if other in topic_set and other != x:
                    selected.add(i)

    return tuple(kg.triples[i] for i in sorted(selected)), skipped


def pagerank(kg, damping=0.85, tolerance=1e-10, max_iters=200):
    """PageRank over the entity link graph (subject -> object).

    Parallel triples between the same ordered pair count as one link.
    Dangling entities spread their mass uniformly over all entities.
    """
    if len(kg) == 0:
        raise ValueError("pagerank of an empty knowledge graph")
    entities = kg.entities
    pos = {e: i for i, e in enumerate(entities)}
    n = len(entities)
    links = {}
    for t in kg.triples:
        links.setdefault((pos[t.subject], pos[t.object]), None)
    src = np.array([s for s, _ in links], dtype=np.int64)
    dst = np.array([d for _, d in links], dtype=np.int64)
    outdeg = np.bincount(src, minlength=n).astype(np.float64)
    dangling = outdeg == 0

    rank = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        share = np.zeros(n)
        np.divide(rank, outdeg, out=share, where=~dangling)
        incoming = np.zeros(n)
        np.add.at(incoming, dst, share[src])
        new = (1.0 - damping) / n + damping * (incoming + rank[dangling].sum() / n)
        delta = np.abs(new - rank).sum()
        rank = new
        if delta < tolerance:
            break
    rank /= rank.sum()
    return {e: float(rank[i]) for i, e in enumerate(entities)}


@dataclass
class Instance:
    """One example: main entity, topic entities, input triples, reference."""

    main_entity: str
    topic_entities: list
    triples: tuple
    text: str = ""

    def __post_init__(self):
        self.topic_entities = list(self.topic_entities)
        self.triples = dedup_triples(self.triples)
        if len(set(self.topic_entities)) != len(self.topic_entities):
            raise DataError(f"duplicate topic entities: {self.topic_entities}")
        if self.main_entity in self.topic_entities:
            raise DataError(f"main entity {self.main_entity!r} listed as a topic entity")
        if self.triples and not any(self.main_entity in (t.subject, t.object) for t in self.triples):
            raise DataError(f"main entity {self.main_entity!r} appears in no triple")

    @property
    def tokens(self):
        return tokenize(self.text)

    def to_json(self):
        return json.dumps(
            {
                "main_entity": self.main_entity,
                "topic_entities": self.topic_entities,
                "triples": [list(t) for t in self.triples],
                "text": self.text,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line):
        rec = json.loads(line)
        return cls(
            main_entity=rec["main_entity"],
            topic_entities=rec.get("topic_entities", []),
            triples=[tuple(t) for t in rec["triples"]],
            text=rec.get("text", ""),
        )


def read_instances(path):
    instances = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    instances.append(Instance.from_json(line))
                except (ValueError, KeyError, TypeError) as exc:
                    raise DataError(str(exc), location=f"{path}:{lineno}") from None
    except OSError as exc:
        raise DataError(f"cannot read instance file: {exc}", location=str(path)) from None
    return instances


def write_instances(instances, path):
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")


def read_triples(path):
    """Read a tab-separated ``subject predicate object`` file into a KG."""
    records = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = [p.strip() for p in line.split("\t")]
                if len(parts) != 3:
                    raise DataError(f"expected 3 tab-separated fields, got {len(parts)}", location=f"{path}:{lineno}")
                try:
                    records.append(Triple(*parts))
                except ValueError as exc:
                    raise DataError(str(exc), location=f"{path}:{lineno}") from None
    except OSError as exc:
        raise DataError(f"cannot read triple file: {exc}", location=str(path)) from None
    return build_graph(records)


@dataclass
class Stats:
    instances: int
    input_vocab: int
    output_vocab: int
    entities: int
    relations: int
    avg_triples: float
    avg_words: float

    ROWS = (
        ("instances", "# instances"),
        ("input_vocab", "Input vocab"),
        ("output_vocab", "Output vocab"),
        ("entities", "# distinct entities"),
        ("relations", "# distinct relations"),
        ("avg_triples", "Avg. # triples per input"),
        ("avg_words", "Avg. # words per output"),
    )

    def format(self):
        lines = []
        for key, title in self.ROWS:
            value = getattr(self, key)
            text = f"{value:.2f}" if isinstance(value, float) else str(value)
            lines.append(f"{title:<28}{text}")
        return "\n".join(lines)


def dataset_stats(instances):
    if not instances:
        raise ValueError("dataset_stats needs at least one instance")
    input_vocab, output_vocab, entities, relations = set(), set(), set(), set()
    n_triples = n_words = 0
    for inst in instances:
        for t in inst.triples:
            entities.update((t.subject, t.object))
            relations.add(t.predicate)
            for label in t:
                input_vocab.update(tokenize(label))
        tokens = inst.tokens
        output_vocab.update(tokens)
        n_triples += len(inst.triples)
        n_words += len(tokens)
    n = len(instances)
    return Stats(
        instances=n,
        input_vocab=len(input_vocab),
        output_vocab=len(output_vocab),
        entities=len(entities),
        relations=len(relations),
        avg_triples=n_triples / n,
        avg_words=n_words / n,
    )


_SYLLABLES = ("ka", "ro", "mi", "tes", "lu", "van", "or", "bel", "si", "da", "ne", "pol", "gra", "tu", "fen", "ix")
_RELATIONS = (
    "member of", "born in", "genre", "located in", "part of", "award received",
    "instance of", "spouse", "capital of", "record label", "occupation", "country",
)


def _entity_names(rng, n):
    names = {}
    while len(names) < n:
        words = rng.choice((1, 1, 2))
        name = " ".join("".join(rng.choice(_SYLLABLES) for _ in range(2)) for _ in range(words))
        names.setdefault(name, None)
    return list(names)


def _relation_names(n):
    out = []
    for i in range(n):
        base = _RELATIONS[i % len(_RELATIONS)]
        out.append(base if i < len(_RELATIONS) else f"{base} {i // len(_RELATIONS)}")
    return out


def synth_corpus(seed, n_instances=16, n_entities=40, n_relations=8, triples_per_instance=6):
    """Generate a deterministic toy corpus.

    Every instance has exactly ``triples_per_instance`` triples. Each topic
    entity is linked to the main entity by a 1- or 2-hop path whose labels
    make up the reference sentence; the remaining triples are distractors
    around the main entity and its neighbours.
    """
    if min(n_instances, n_entities, n_relations, triples_per_instance) < 1:
        raise ValueError("all synth_corpus counts must be >= 1")
    if n_entities < 2:
        raise ValueError("synth_corpus needs at least 2 entities")
    rng = random.Random(seed)
    entities = _entity_names(rng, n_entities)
    relations = _relation_names(n_relations)
    if n_instances <= n_entities:
        mains = rng.sample(entities, n_instances)
    else:
        mains = [rng.choice(entities) for _ in range(n_instances)]

    corpus = []
    for main in mains:
        others = [e for e in entities if e != main]
        triples = {}
        clauses = []
        n_topics = 1 if triples_per_instance < 3 else rng.choice((1, 2))
        topics = rng.sample(others, min(n_topics, len(others)))
        for topic in topics:
            budget = triples_per_instance - len(triples)
            bridges = [e for e in others if e not in topics]
            if budget >= 2 and bridges and rng.random() < 0.3:
                via = rng.choice(bridges)
                r1, r2 = rng.choice(relations), rng.choice(relations)
                triples.setdefault(Triple(main, r1, via), None)
                triples.setdefault(Triple(via, r2, topic), None)
                clauses.append(f"{main} {r1} {via} which {r2} {topic}")
            elif budget >= 1:
                rel = rng.choice(relations)
                triples.setdefault(Triple(main, rel, topic), None)
                clauses.append(f"{main} {rel} {topic}")
        attempts = 0
        while len(triples) < triples_per_instance and attempts < 1000:
            attempts += 1
            rel = rng.choice(relations)
            other = rng.choice(others)
            if rng.random() < 0.5:
                anchor = rng.choice([t.object for t in triples if t.subject == main] or [main])
                cand = Triple(anchor, rel, other) if anchor != other else Triple(main, rel, other)
            elif rng.random() < 0.5:
                cand = Triple(main, rel, other)
            else:
                cand = Triple(other, rel, main)
            triples.setdefault(cand, None)
        text = " and ".join(clauses) + " ."
        corpus.append(Instance(main, topics, tuple(triples), text))
    return corpus
