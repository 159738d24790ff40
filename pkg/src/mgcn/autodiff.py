"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op builds a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. :meth:`Tensor.backward`
walks the recorded graph in reverse topological order and *adds* into the
``grad`` of leaf tensors, so a parameter used in several places (tied
embeddings, one weight applied on many edges) receives the summed gradient.
"""

import contextlib

import numpy as np

from .errors import ShapeError

DTYPE = np.float64

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {self.shape}")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)
    __getitem__ = lambda self, idx: getitem(self, idx)


class Parameter(Tensor):
    """A named leaf tensor that always tracks gradients."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ---------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    x = as_tensor(x)
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,))


def log(x):
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- shape ---------------------------------------------------------------------


def reshape(x, shape):
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x):
    """Swap the last two axes."""
    x = as_tensor(x)
    return _result(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(x, idx):
    x = as_tensor(x)

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _result(x.data[idx], (x,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tuple(tensors), backward)


def gather_rows(x, index):
    """Rows of a 2-D tensor at integer ``index`` (any index shape)."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if x.data.ndim != 2:
        raise ShapeError(f"gather_rows: expected a matrix, got shape {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for shape {x.shape}")

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index.reshape(-1), g.reshape(-1, x.shape[1]))
        return (out,)

    return _result(x.data[index], (x,), backward)


# -- reductions ----------------------------------------------------------------


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), backward)


def mean_rows(x):
    """Mean over the first axis."""
    x = as_tensor(x)
    n = x.shape[0]
    return _result(x.data.sum(axis=0) / n, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


# -- linear algebra ------------------------------------------------------------


def matmul(a, b):
    """``a @ b`` with numpy batch broadcasting (both operands at least 2-D)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward)


def sparse_adj_matmul(edges, h, num_nodes=None, weights=None):
    """Sum rows of ``h`` along edges: ``out[j] = sum_{(i, j)} w_ij * h[i]``.

    ``edges`` is an ``(E, 2)`` array of (source, target) indices; messages
    are added in edge-list order so results are reproducible bit for bit.
    """
    h = as_tensor(h)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = h.shape[0] if num_nodes is None else num_nodes
    if h.data.ndim != 2:
        raise ShapeError(f"sparse_adj_matmul: expected a matrix, got shape {h.shape}")
    if len(edges) and (edges.min() < 0 or edges[:, 0].max() >= h.shape[0] or edges[:, 1].max() >= n):
        raise ShapeError(f"sparse_adj_matmul: edge index out of range for shape {h.shape}")
    src, dst = edges[:, 0], edges[:, 1]
    w = None if weights is None else np.asarray(weights, dtype=DTYPE)[:, None]
    out = np.zeros((n, h.shape[1]), dtype=DTYPE)
    msgs = h.data[src] if w is None else h.data[src] * w
    np.add.at(out, dst, msgs)

    def backward(g):
        gh = np.zeros_like(h.data)
        back = g[dst] if w is None else g[dst] * w
        np.add.at(gh, src, back)
        return (gh,)

    return _result(out, (h,), backward)


def conv_stack(weights, stacked, bias):
    """Per-channel weighted sum across a stack of graph representations.

    ``out = w[0] * h[0] + w[1] * h[1] + ... + bias`` with ``weights`` of
    shape ``(G, d)`` and each ``stacked[g]`` of shape ``(N, d)``. The sum
    runs in stack order, so unit weights and zero bias reproduce a plain
    sum exactly.
    """
    weights, bias = as_tensor(weights), as_tensor(bias)
    stacked = [as_tensor(h) for h in stacked]
    if weights.shape[0] != len(stacked):
        raise ShapeError(f"conv_stack: {weights.shape[0]} weight rows for {len(stacked)} graphs")
    for h in stacked:
        if h.shape[-1] != weights.shape[1] or h.shape != stacked[0].shape:
            raise ShapeError(f"conv_stack: incompatible shapes {weights.shape} and {h.shape}")
    out = stacked[0].data * weights.data[0]
    for g in range(1, len(stacked)):
        out = out + stacked[g].data * weights.data[g]
    out = out + bias.data

    def backward(grad):
        gw = np.stack([(grad * h.data).sum(axis=0) for h in stacked])
        gb = _unbroadcast(grad, bias.shape)
        return (gw, *[grad * weights.data[g] for g in range(len(stacked))], gb)

    return _result(out, (weights, *stacked, bias), backward)


# -- normalisation and losses ------------------------------------------------------


def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``; positions where ``mask`` is False get exactly 0."""
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _result(out, (x,), backward)


def cross_entropy(logits, targets, mask=None):
    """Summed ``-log softmax(logits)[row, target]`` over rows of a matrix.

    ``mask`` (per row, 0/1 or float weights) excludes padding rows.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    if logits.data.ndim != 2 or logits.shape[0] != len(targets):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError(f"cross_entropy: target index out of range for {logits.shape}")
    w = np.ones(len(targets)) if mask is None else np.asarray(mask, dtype=DTYPE).reshape(-1)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(targets))
    per_row = -logp[rows, targets]
    loss = float((per_row * w).sum())

    def backward(g):
        grad = np.exp(logp)
        grad[rows, targets] -= 1.0
        return (grad * (w * g)[:, None],)

    return _result(np.array(loss), (logits,), backward)


# -- optimisation ----------------------------------------------------------------


class Adam:
    """Bias-corrected Adam; ``step`` updates in place and zeroes gradients."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.grad.fill(0.0)

    def state_dict(self):
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


def clip_grad_norm(params, max_norm):
    total = np.sqrt(np.add.reduce([float((p.grad * p.grad).sum()) for p in params]))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= scale
    return total


def grad_check(closure, params, eps=1e-5):
    """Largest relative error between backprop and central differences.

    ``closure()`` must rebuild the scalar loss from the current parameter
    values. Every scalar entry of every parameter is perturbed.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    closure().backward()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                plus = closure().item()
                flat[k] = orig - eps
                minus = closure().item()
                flat[k] = orig
                numeric = (plus - minus) / (2.0 * eps)
                ak = a.reshape(-1)[k]
                err = abs(ak - numeric) / max(abs(ak), abs(numeric), 1e-8)
                worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
