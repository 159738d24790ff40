"""Two-layer LSTM decoder with bilinear attention over node representations.

All functions work on a batch axis ``B``. ``memory`` holds the encoder
output as ``(B, N, D)`` with ``D = layers * d``; ``mask`` is a ``(B, N)``
boolean array marking real (non-padding) nodes. The output projection is
the transposed embedding table, so input and output embeddings are one
parameter.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class LSTMParams:
    Wx: ad.Tensor
    Wh: ad.Tensor
    b: ad.Tensor


@dataclass
class DecoderParams:
    embedding: ad.Tensor
    lstm1: LSTMParams
    lstm2: LSTMParams
    attn_W: ad.Tensor
    comb_W: ad.Tensor
    comb_b: ad.Tensor
    bridge_W: ad.Tensor
    bridge_b: ad.Tensor
    input_feeding: bool = True

    @property
    def output_projection(self):
        return self.embedding

    @property
    def hidden(self):
        return self.embedding.shape[1]


@dataclass
class DecoderState:
    h1: ad.Tensor
    c1: ad.Tensor
    h2: ad.Tensor
    c2: ad.Tensor
    context: ad.Tensor

    def as_arrays(self):
        return (self.h1.data, self.c1.data, self.h2.data, self.c2.data, self.context.data)

    @classmethod
    def from_arrays(cls, arrays):
        return cls(*(ad.Tensor(a) for a in arrays))


def lstm_cell(x, h, c, p):
    d = h.shape[1]
    gates = ad.matmul(x, p.Wx) + ad.matmul(h, p.Wh) + p.b
    i = ad.sigmoid(gates[:, 0:d])
    f = ad.sigmoid(gates[:, d : 2 * d])
    g = ad.tanh(gates[:, 2 * d : 3 * d])
    o = ad.sigmoid(gates[:, 3 * d : 4 * d])
    c_new = f * c + i * g
    return o * ad.tanh(c_new), c_new


def masked_mean_nodes(memory, mask):
    m = np.asarray(mask, dtype=np.float64)
    total = ad.sum(ad.mul(memory, m[:, :, None]), axis=1)
    return ad.div(total, m.sum(axis=1, keepdims=True))


def initial_state(params, memory, mask):
    """Hidden states from the mean node representation; cells and context start at 0."""
    d = params.hidden
    bridge = ad.tanh(ad.matmul(masked_mean_nodes(memory, mask), params.bridge_W) + params.bridge_b)
    batch = memory.shape[0]
    zeros = ad.Tensor(np.zeros((batch, d)))
    return DecoderState(
        h1=bridge[:, 0:d],
        c1=zeros,
        h2=bridge[:, d : 2 * d],
        c2=zeros,
        context=ad.Tensor(np.zeros((batch, memory.shape[2]))),
    )


def attend(query, memory, mask):
    """Softmax attention of ``query`` (B, D) over node rows; returns (context, weights)."""
    batch = query.shape[0]
    dim = memory.shape[2]
    scores = ad.matmul(memory, ad.reshape(query, (batch, dim, 1)))
    weights = ad.softmax(ad.reshape(scores, (batch, memory.shape[1])), axis=1, mask=mask)
    context = ad.matmul(ad.reshape(weights, (batch, 1, memory.shape[1])), memory)
    return ad.reshape(context, (batch, dim)), weights


def decode_step(params, state, prev_tokens, memory, mask):
    """One decoder step; returns ``(logits, new_state, attention_weights)``."""
    prev_tokens = np.asarray(prev_tokens, dtype=np.int64)
    if prev_tokens.size and (prev_tokens.min() < 0 or prev_tokens.max() >= params.embedding.shape[0]):
        raise ValueError(f"token index out of vocabulary range: {prev_tokens}")
    x = ad.gather_rows(params.embedding, prev_tokens)
    if params.input_feeding:
        x = ad.concat([x, state.context], axis=1)
    h1, c1 = lstm_cell(x, state.h1, state.c1, params.lstm1)
    h2, c2 = lstm_cell(h1, state.h2, state.c2, params.lstm2)
    context, weights = attend(ad.matmul(h2, params.attn_W), memory, mask)
    combined = ad.tanh(ad.matmul(ad.concat([h2, context], axis=1), params.comb_W) + params.comb_b)
    logits = ad.matmul(combined, ad.transpose(params.output_projection))
    return logits, DecoderState(h1, c1, h2, c2, context), weights


def sequence_nll(params, memory, mask, inputs, targets, target_mask):
    """Teacher-forced summed cross-entropy.

    ``inputs``/``targets``/``target_mask`` are ``(B, T)`` arrays; step ``t``
    feeds ``inputs[:, t]`` and scores ``targets[:, t]``.
    """
    state = initial_state(params, memory, mask)
    total = None
    for t in range(inputs.shape[1]):
        logits, state, _ = decode_step(params, state, inputs[:, t], memory, mask)
        step = ad.cross_entropy(logits, targets[:, t], target_mask[:, t])
        total = step if total is None else total + step
    return total


# -- search ------------------------------------------------------------------------


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    logprob: float
    finished: bool = False

    @property
    def length(self):
        return len(self.tokens)

    @property
    def score(self):
        """Length-normalised log-probability (per generated token, eos included)."""
        return self.logprob / max(len(self.tokens), 1)

    def sort_key(self):
        return (-self.score, self.tokens, len(self.tokens))


def _select(items, k):
    """Top ``k`` of (total, tokens, parent) by total desc then tokens asc."""
    items.sort(key=lambda it: (-it[0], it[1]))
    return items[:k]


def beam_search(step, state, bos, eos, beam=10, max_len=100):
    """Length-normalised beam search.

    ``step(state, tokens)`` maps a batch of hypotheses (``state`` is a tuple
    of arrays with the hypothesis axis first, ``tokens`` the last token of
    each) to ``(log_probs (k, V), new_state)``. At each step the ``beam``
    best extensions by cumulative log-probability are kept; those ending in
    ``eos`` are set aside, and hypotheses still open at ``max_len`` are
    finished as they are. The finished hypothesis with the best per-token
    score wins; ties go to the lower token sequence, then the shorter one.
    Returns the winning :class:`Hypothesis` (``tokens`` includes ``eos``
    when it was produced).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    alive = [Hypothesis((), 0.0)]
    finished = []
    prev = np.array([bos], dtype=np.int64)
    for t in range(max_len):
        logp, state = step(state, prev)
        logp = np.asarray(logp, dtype=np.float64)
        totals = np.array([h.logprob for h in alive])[:, None] + logp
        flat = totals.reshape(-1)
        finite = np.flatnonzero(np.isfinite(flat))
        if len(finite) == 0:
            break
        if len(finite) > beam:
            cut = np.partition(flat[finite], len(finite) - beam)[len(finite) - beam]
            finite = finite[flat[finite] >= cut]
        vocab = logp.shape[1]
        cands = []
        for f in finite:
            parent, tok = divmod(int(f), vocab)
            cands.append((float(flat[f]), alive[parent].tokens + (tok,), parent))
        chosen = _select(cands, beam)

        next_alive, parents = [], []
        for total, tokens, parent in chosen:
            if tokens[-1] == eos:
                finished.append(Hypothesis(tokens, total, True))
            elif t == max_len - 1:
                finished.append(Hypothesis(tokens, total, False))
            else:
                next_alive.append(Hypothesis(tokens, total))
                parents.append(parent)
        if not next_alive:
            break
        idx = np.array(parents, dtype=np.int64)
        state = tuple(a[idx] for a in state)
        prev = np.array([h.tokens[-1] for h in next_alive], dtype=np.int64)
        alive = next_alive
    if not finished:
        return Hypothesis((), float("-inf"))
    return min(finished, key=Hypothesis.sort_key)


def greedy_search(step, state, bos, eos, max_len=100):
    """Arg-max decoding with the same stopping rules as :func:`beam_search`."""
    tokens = []
    logprob = 0.0
    prev = np.array([bos], dtype=np.int64)
    for _ in range(max_len):
        logp, state = step(state, prev)
        logp = np.asarray(logp, dtype=np.float64)[0]
        tok = int(np.argmax(logp))
        logprob += float(logp[tok])
        tokens.append(tok)
        if tok == eos:
            return Hypothesis(tuple(tokens), logprob, True)
        prev = np.array([tok], dtype=np.int64)
    return Hypothesis(tuple(tokens), logprob, False)


def model_step_fn(params, memory, mask):
    """Adapt :func:`decode_step` to the ``step`` protocol of the searches."""

    def step(arrays, tokens):
        with ad.no_grad():
            state = DecoderState.from_arrays(arrays)
            logits, new_state, _ = decode_step(params, state, tokens, memory, mask)
            logp = ad.log_softmax(logits, axis=1).data
        return logp, new_state.as_arrays()

    return step


def start_arrays(params, memory, mask):
    with ad.no_grad():
        return initial_state(params, memory, mask).as_arrays()
