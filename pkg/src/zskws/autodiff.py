"""A small reverse-mode differentiation engine over numpy arrays.

Only the handful of operations the keyword-spotting model needs are
provided. Every op records its parents and a vector-Jacobian product;
``Tensor.backward`` replays them in reverse topological order.
"""

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._vjp = _vjp
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: mul(self, -1.0)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=parents if needs else (), _vjp=vjp if needs else None)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b):
    """Matrix product for operands of rank >= 2 (leading dims broadcast)."""
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), vjp)


def tsum(a, axis=None, keepdims=False):
    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    return _node(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def getitem(a, idx):
    basic = all(isinstance(i, (slice, int)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def vjp(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), vjp)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _node(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, sizes, axis=axis)),
    )


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    return _node(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.moveaxis(g, axis, 0)),
    )


def relu(a):
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    s = _sigmoid(a.data)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),))


def softmax(a, axis=-1):
    s = _softmax(a.data, axis)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (a,), vjp)


def take_rows(table, ids):
    """Embedding lookup: rows of ``table`` selected by integer ``ids``."""
    ids = np.asarray(ids, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(table.data)
        np.add.at(out, ids, g)
        return (out,)

    return _node(table.data[ids], (table,), vjp)


def conv1d(x, w, b=None, stride=1):
    """Valid 1-D convolution over time.

    x: [..., T, C_in], w: [k, C_in, C_out], b: [C_out] -> [..., T_out, C_out]
    with T_out = (T - k) // stride + 1.
    """
    x, w = as_tensor(x), as_tensor(w)
    b = None if b is None else as_tensor(b)
    k, c_in, c_out = w.shape
    t = x.shape[-2]
    t_out = (t - k) // stride + 1
    if t_out < 1:
        raise ValueError(f"sequence of length {t} shorter than kernel {k}")
    # windows: [..., T_out, C_in, k] -> [..., T_out, k, C_in]
    win = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=-2)[..., ::stride, :, :][..., :t_out, :, :]
    cols = np.swapaxes(win, -1, -2).reshape(*x.shape[:-2], t_out, k * c_in)
    w2 = w.data.reshape(k * c_in, c_out)
    out = cols @ w2
    if b is not None:
        out = out + b.data

    def vjp(g):
        gw = (cols.reshape(-1, k * c_in).T @ g.reshape(-1, c_out)).reshape(w.shape)
        gcols = (g @ w2.T).reshape(*x.shape[:-2], t_out, k, c_in)
        gx = np.zeros_like(x.data)
        span = stride * (t_out - 1) + 1
        for j in range(k):
            gx[..., j : j + span : stride, :] += gcols[..., :, j, :]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.reshape(-1, c_out).sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, vjp)


def custom(value, inputs, grads):
    """Wrap a precomputed scalar value with known gradients w.r.t. ``inputs``.

    ``grads`` holds d(value)/d(input) arrays, one per input; the incoming
    upstream gradient is a scalar multiplier.
    """
    inputs = tuple(as_tensor(t) for t in inputs)
    return _node(np.asarray(value, dtype=np.float64), inputs, lambda g: tuple(float(g) * gr for gr in grads))


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    """Plain numpy log-softmax (no graph)."""
    m = x.max(axis=axis, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=axis, keepdims=True))
