"""Training loop, perplexity, and checkpoint files.

Checkpoint layout (little-endian)::

    b"MGCN" | u32 format version | u64 header length | JSON header | payload

The JSON header holds the config, vocabulary, step counter, best validation
perplexity and a tensor index (name, shape, byte offset into the payload);
the payload is the raw float64 data of every tensor in index order.
"""

import json
import logging
import math
import os
import struct
import tempfile
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .errors import DataError
from .model import MGCNModel
from .preprocess import Vocabulary, build_vocab, delexicalize

logger = logging.getLogger(__name__)

MAGIC = b"MGCN"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointVersionError(DataError):
    pass


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: OrderedDict
    step: int = 0
    best_perplexity: float = float("inf")
    version: int = FORMAT_VERSION

    def model(self):
        model = MGCNModel.create(self.config, self.vocab)
        model.load_arrays(self.params)
        return model

    def equals(self, other):
        return (
            self.version == other.version
            and self.config == other.config
            and self.vocab == other.vocab
            and self.step == other.step
            and self.best_perplexity == other.best_perplexity
            and list(self.params) == list(other.params)
            and all(np.array_equal(a, other.params[k]) for k, a in self.params.items())
        )


def checkpoint_from_model(model, step=0, best_perplexity=float("inf")):
    return Checkpoint(model.config, model.vocab, model.state_arrays(), step, best_perplexity)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_perplexity: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)
    best_epoch: int = 0
    skipped: int = 0


def perplexity(model, instances, batch_size=16):
    """``exp(total NLL / total tokens)`` with eos counted as a token."""
    if not instances:
        raise ValueError("perplexity over an empty set")
    if model.config.delex:
        instances = [delexicalize(x)[0] for x in instances]
    return _perplexity(model, [model.prepare_instance(x) for x in instances], batch_size)


def _perplexity(model, prepared, batch_size):
    total, count = 0.0, 0
    with ad.no_grad():
        for start in range(0, len(prepared), batch_size):
            loss, n = model.batch_loss(prepared[start : start + batch_size])
            total += loss.item()
            count += n
    return math.exp(total / count)


def _usable(instances, split):
    kept = []
    for i, inst in enumerate(instances):
        if not inst.triples:
            warnings.warn(f"{split} instance {i} has no triples; skipped", stacklevel=3)
            continue
        kept.append(inst)
    return kept


def make_batches(prepared, batch_size, rng):
    """Group instances of similar node count, then shuffle the batch order."""
    order = sorted(range(len(prepared)), key=lambda i: (prepared[i].num_nodes, i))
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    return [batches[j] for j in rng.permutation(len(batches))]


def train(config, train_instances, valid_instances, on_epoch=None):
    """Train until validation perplexity stops improving; return the best checkpoint."""
    config.validate()
    train_set = _usable(train_instances, "train")
    valid_set = _usable(valid_instances, "valid")
    skipped = len(train_instances) - len(train_set)
    if not train_set:
        raise DataError("no usable training instances (all have empty triple sets)")
    if not valid_set:
        raise DataError("no usable validation instances")
    if config.delex:
        train_set = [delexicalize(x)[0] for x in train_set]
        valid_set = [delexicalize(x)[0] for x in valid_set]

    vocab = build_vocab(train_set, config.min_freq)
    model = MGCNModel.create(config, vocab)
    params = model.parameters()
    optim = ad.Adam(params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 1])

    train_prep = [model.prepare_instance(x) for x in train_set]
    valid_prep = [model.prepare_instance(x) for x in valid_set]

    best = checkpoint_from_model(model, 0, float("inf"))
    best_epoch, stale = 0, 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        epoch_loss, epoch_tokens = 0.0, 0
        for batch_idx in make_batches(train_prep, config.batch_size, rng):
            loss, n = model.batch_loss([train_prep[i] for i in batch_idx])
            ad.div(loss, float(n)).backward()
            if config.max_grad_norm > 0:
                ad.clip_grad_norm(params, config.max_grad_norm)
            optim.step()
            epoch_loss += loss.item()
            epoch_tokens += n
        ppl = _perplexity(model, valid_prep, config.batch_size)
        record = EpochRecord(epoch, epoch_loss / epoch_tokens, ppl)
        history.append(record)
        logger.info("epoch %d train_loss %.6f valid_ppl %.6f", epoch, record.train_loss, ppl)
        if on_epoch is not None:
            on_epoch(record)
        if ppl < best.best_perplexity - config.min_delta:
            best = checkpoint_from_model(model, optim.t, ppl)
            best_epoch, stale = epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_epoch == 0:
        best = checkpoint_from_model(model, optim.t, _perplexity(model, valid_prep, config.batch_size))
    return TrainResult(best, history, best_epoch, skipped)


# -- persistence -----------------------------------------------------------------------


def encode_checkpoint(ckpt):
    index = []
    offset = 0
    payload = []
    for name, arr in ckpt.params.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    header = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.to_dict(),
        "step": ckpt.step,
        "best_perplexity": ckpt.best_perplexity if math.isfinite(ckpt.best_perplexity) else None,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, ckpt.version, len(blob)) + blob + b"".join(payload)


def save(ckpt, path):
    """Write atomically: temp file in the target directory, then rename."""
    data = encode_checkpoint(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".mgcn-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def decode_checkpoint(data, source="<bytes>"):
    if len(data) < _PREFIX.size:
        raise DataError("truncated checkpoint prefix", location=f"{source}@0")
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}", location=f"{source}@0")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}", location=f"{source}@4"
        )
    start = _PREFIX.size
    if start + hlen > len(data):
        raise DataError(f"header of {hlen} bytes runs past end of file ({len(data)} bytes)", location=f"{source}@{start}")
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
        config = TrainConfig.from_dict(header["config"])
        vocab = Vocabulary.from_dict(header["vocab"])
        tensors = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"corrupt header: {exc}", location=f"{source}@{start}") from None
    base = start + hlen
    params = OrderedDict()
    end = base
    for entry in tensors:
        lo = base + entry["offset"]
        hi = lo + entry["nbytes"]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if hi > len(data) or entry["nbytes"] != 8 * count:
            raise DataError(f"tensor {entry['name']!r} payload truncated or malformed", location=f"{source}@{lo}")
        params[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=lo).astype(np.float64).reshape(entry["shape"])
        end = max(end, hi)
    if end != len(data):
        raise DataError(f"{len(data) - end} unexpected trailing bytes", location=f"{source}@{end}")
    best = header.get("best_perplexity")
    return Checkpoint(config, vocab, params, header.get("step", 0), float("inf") if best is None else best, version)


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}", location=str(path)) from None
    return decode_checkpoint(data, str(path))
