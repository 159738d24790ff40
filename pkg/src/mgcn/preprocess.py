"""Vocabulary, delexicalization and relexicalization."""

import warnings
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError
from .kg import Instance, Triple
from .tokenize import is_placeholder, tokenize

PAD, BOS, EOS, UNK, GLOBAL = "<pad>", "<bos>", "<eos>", "<unk>", "<global>"
RESERVED = (PAD, BOS, EOS, UNK, GLOBAL)

__all__ = [
    "Vocabulary", "build_vocab", "DelexMapping", "delexicalize", "relexicalize",
    "tokenize", "read_mapping", "write_mapping",
]


class Vocabulary:
    """Shared input/output vocabulary with reserved ids 0..4."""

    pad_id, bos_id, eos_id, unk_id, global_id = range(5)

    def __init__(self, tokens, min_freq=1):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self.tokens = tokens
        self.min_freq = min_freq
        self._index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens and self.min_freq == other.min_freq

    def index(self, token):
        return self._index.get(token, self.unk_id)

    def encode(self, tokens):
        return [self.index(t) for t in tokens]

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def to_dict(self):
        return {"tokens": self.tokens, "min_freq": self.min_freq}

    @classmethod
    def from_dict(cls, d):
        return cls(d["tokens"], d.get("min_freq", 1))


def instance_tokens(instance):
    """Every token an instance contributes: reference text and triple labels."""
    toks = list(instance.tokens)
    for t in instance.triples:
        for label in t:
            toks.extend(tokenize(label))
    return toks


def build_vocab(instances, min_freq=1):
    """Frequency-ordered (ties lexicographic) vocabulary over texts and labels."""
    counts = Counter()
    for inst in instances:
        counts.update(instance_tokens(inst))
    kept = sorted((t for t, c in counts.items() if c >= min_freq and t not in RESERVED), key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + kept, min_freq=min_freq)


@dataclass
class DelexMapping:
    """Placeholder -> original label, with role and index per placeholder."""

    labels: dict = field(default_factory=dict)
    roles: dict = field(default_factory=dict)
    indices: dict = field(default_factory=dict)

    def add(self, placeholder, label, role, index):
        if placeholder in self.labels:
            raise ValueError(f"duplicate placeholder {placeholder}")
        self.labels[placeholder] = label
        self.roles[placeholder] = role
        self.indices[placeholder] = index

    def inverse(self):
        return {label: ph for ph, label in self.labels.items()}


def delexicalize(instance):
    """Replace the main entity by ``MAIN_0`` and topic ``i`` by ``TOPIC_i``.

    Triples are rewritten by exact label equality. In the reference text the
    tokenized labels are matched case-insensitively, scanning left to right
    and taking the longest label at each position (main entity first on
    equal length).
    """
    mapping = DelexMapping()
    mapping.add("MAIN_0", instance.main_entity, "main", 0)
    for i, topic in enumerate(instance.topic_entities, 1):
        mapping.add(f"TOPIC_{i}", topic, "topic", i)
    by_label = mapping.inverse()

    triples = [
        Triple(by_label.get(t.subject, t.subject), t.predicate, by_label.get(t.object, t.object))
        for t in instance.triples
    ]

    patterns = []
    for ph, label in mapping.labels.items():
        toks = tokenize(label)
        if toks:
            patterns.append((toks, ph))
    # longest first; stable sort keeps main ahead of topics on ties
    patterns.sort(key=lambda p: -len(p[0]))

    tokens = instance.tokens
    out = []
    i = 0
    while i < len(tokens):
        for toks, ph in patterns:
            if tokens[i : i + len(toks)] == toks:
                out.append(ph)
                i += len(toks)
                break
        else:
            out.append(tokens[i])
            i += 1

    delexed = Instance(
        main_entity="MAIN_0",
        topic_entities=[f"TOPIC_{i}" for i in range(1, len(instance.topic_entities) + 1)],
        triples=triples,
        text=" ".join(out),
    )
    return delexed, mapping


def relexicalize(tokens, mapping):
    """Join ``tokens`` with placeholders replaced by their original labels."""
    out = []
    for tok in tokens:
        if tok in mapping.labels:
            out.append(mapping.labels[tok])
        else:
            if is_placeholder(tok):
                warnings.warn(f"placeholder {tok} has no mapping; kept verbatim", stacklevel=2)
            out.append(tok)
    return " ".join(out)


def write_mapping(mapping, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ph, label in mapping.labels.items():
            fh.write(f"{ph}\t{label}\n")


def read_mapping(path):
    mapping = DelexMapping()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError("expected placeholder<TAB>label", location=f"{path}:{lineno}")
            ph, label = parts
            role, _, idx = ph.partition("_")
            mapping.add(ph, label, role.lower(), int(idx) if idx.isdigit() else -1)
    return mapping
