"""Training configuration and the ``key = value`` config file format."""

import dataclasses
from dataclasses import dataclass

from .encoder import AGGREGATIONS
from .graphs import ALL_LABELS, EdgeLabel


@dataclass
class TrainConfig:
    hidden: int = 360
    layers: int = 6
    aggregation: str = "sum"
    encoder: str = "mgcn"
    graphs: tuple = tuple(l.value for l in ALL_LABELS)
    lr: float = 0.0003
    batch_size: int = 16
    beam: int = 10
    max_len: int = 100
    seed: int = 0
    patience: int = 5
    min_delta: float = 1e-4
    max_epochs: int = 100
    delex: bool = False
    normalize: bool = False
    input_feeding: bool = True
    init_scale: float = 0.08
    embed_scale: float = 1.0
    max_grad_norm: float = 0.0
    min_freq: int = 1

    def __post_init__(self):
        self.graphs = tuple(EdgeLabel.parse(g).value for g in self.graphs)
        self.validate()

    def validate(self):
        for name in ("hidden", "layers", "batch_size", "patience", "beam", "max_len", "min_freq"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.encoder not in ("mgcn", "levi"):
            raise ValueError(f"encoder must be 'mgcn' or 'levi', got {self.encoder!r}")
        if EdgeLabel.SELF.value not in self.graphs:
            raise ValueError("the self graph is always required")
        if len(set(self.graphs)) != len(self.graphs):
            raise ValueError(f"duplicate graph labels: {self.graphs}")
        if self.max_epochs < 0 or self.lr < 0:
            raise ValueError("max_epochs and lr must be non-negative")

    @property
    def active_labels(self):
        return tuple(l for l in ALL_LABELS if l.value in self.graphs)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["graphs"] = list(self.graphs)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_value(field_type, raw):
    raw = raw.strip()
    if field_type is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean (on/off), got {raw!r}")
    if field_type is int:
        return int(raw)
    if field_type is float:
        return float(raw)
    if field_type is tuple:
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    return raw


def config_field_types():
    return {f.name: f.type for f in dataclasses.fields(TrainConfig)}


PATH_KEYS = ("train", "valid", "test", "checkpoint", "output")


def read_config_file(path):
    """Parse ``key = value`` lines (``#`` comments) into a dict of raw strings."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = (value.strip(), f"{path}:{lineno}")
    return values
