"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations run eagerly on numpy arrays. While a :class:`GradTape` is active,
every operation with at least one differentiable operand appends a node to
the tape; :func:`backward` replays the tape in reverse. Creation order is a
topological order, so no graph sort is needed.

Outside a tape nothing is recorded, which is the inference path.
"""

import numpy as np

from . import _accel

__all__ = [
    "Tensor", "GradTape", "tensor", "parameter", "backward", "no_grad_value",
    "add", "sub", "mul", "div", "neg", "matmul", "sum", "mean", "reshape",
    "swapaxes", "take", "concat", "sigmoid", "tanh", "exp", "log",
    "masked_softmax", "masked_mean", "lstm", "bce", "dropout", "scale_rows",
]

_TAPES = []


class Tensor:
    """A float64 array plus a flag saying whether gradients flow into it."""

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self):
        return swapaxes(self, -1, -2)


class GradTape:
    """Ordered record of differentiable operations.

    Used as a context manager; tapes nest, and only the innermost one records.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def tensor(data):
    return data if isinstance(data, Tensor) else Tensor(data)


def parameter(data, name=None):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def no_grad_value(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _record(out_data, parents, backward_fn):
    out = Tensor(out_data)
    if _TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        _TAPES[-1].nodes.append((out, parents, backward_fn))
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(tape, loss, params=None):
    """Propagate d(loss) back through ``tape``.

    Gradients are accumulated into ``.grad`` of every differentiable leaf the
    loss depends on. If ``params`` is given, returns a list of gradients in the
    same order (zeros for parameters the loss does not reach); otherwise
    returns a dict mapping leaf tensors to their gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves = {}
    for out, parents, fn in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for parent, pg in zip(parents, fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
                leaves[key] = parent
    result = {}
    for key, g in grads.items():
        if key in produced:
            continue
        leaf = leaves.get(key, loss if key == id(loss) else None)
        if leaf is None:
            continue
        g = np.asarray(g, dtype=np.float64).reshape(leaf.shape)
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        result[leaf] = leaf.grad
    if params is None:
        return result
    return [result.get(p, np.zeros_like(p.data)) for p in params]


# ------------------------------------------------------------------ arithmetic


def add(a, b):
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / bd, ad.shape),
                              _unbroadcast(-g * out / bd, bd.shape)))


def neg(a):
    a = tensor(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    """``np.matmul`` semantics, including 1-D operands and batch broadcasting."""
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data

    def fn(g):
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        ga = g2 @ np.swapaxes(b2, -1, -2)
        gb = np.swapaxes(a2, -1, -2) @ g2
        if ad.ndim == 1:
            ga = ga.reshape(ga.shape[:-2] + ga.shape[-1:])
        if bd.ndim == 1:
            gb = gb.reshape(gb.shape[:-1])
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _record(np.matmul(ad, bd), (a, b), fn)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = tensor(a)
    shape = a.shape

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), fn)


def mean(a, axis=None, keepdims=False):
    a = tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape):
    a = tensor(a)
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swapaxes(a, ax1, ax2):
    a = tensor(a)
    return _record(np.swapaxes(a.data, ax1, ax2), (a,),
                   lambda g: (np.swapaxes(g, ax1, ax2),))


def getitem(a, index):
    a = tensor(a)
    shape = a.shape

    def fn(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _record(a.data[index], (a,), fn)


def take(a, indices, axis=0):
    """Gather along ``axis`` with an integer index array (embedding lookup)."""
    a = tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    n = a.shape[axis]
    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise IndexError(f"index out of bounds for axis {axis} with size {n}")
    shape = a.shape

    def fn(g):
        full = np.zeros(shape)
        moved = np.moveaxis(full, axis, 0)
        gm = np.moveaxis(g, tuple(range(axis, axis + idx.ndim)), tuple(range(idx.ndim)))
        np.add.at(moved, idx, gm)
        return (full,)

    return _record(np.take(a.data, idx, axis=axis), (a,), fn)


def concat(tensors, axis=0):
    tensors = [tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), fn)


def scale_rows(a, factors):
    """Multiply by a constant (non-differentiable) array, broadcasting."""
    return mul(a, Tensor(factors))


# ------------------------------------------------------------- nonlinearities


def sigmoid_array(x):
    """Overflow-free logistic function on arrays or scalars."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a):
    a = tensor(a)
    s = sigmoid_array(a.data)
    return _record(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a):
    a = tensor(a)
    t = np.tanh(a.data)
    return _record(t, (a,), lambda g: (g * (1.0 - t * t),))


def exp(a):
    a = tensor(a)
    e = np.exp(a.data)
    return _record(e, (a,), lambda g: (g * e,))


def log(a):
    a = tensor(a)
    ad = a.data
    return _record(np.log(ad), (a,), lambda g: (g / ad,))


def softmax_array(scores, mask=None, axis=-1):
    """Numerically stable masked softmax on plain arrays."""
    scores = np.asarray(scores, dtype=np.float64)
    if mask is None:
        mask = np.ones(scores.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), scores.shape)
    if not mask.any(axis=axis).all():
        raise ValueError("empty attention support")
    masked = np.where(mask, scores, -np.inf)
    shifted = masked - masked.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=axis, keepdims=True)


def masked_softmax(scores, mask=None, axis=-1):
    """Softmax along ``axis`` restricted to positions where ``mask`` is true.

    Masked-out positions are exactly zero. Raises ``ValueError`` when a row
    has no unmasked position.
    """
    scores = tensor(scores)
    p = softmax_array(scores.data, mask, axis)

    def fn(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _record(p, (scores,), fn)


def masked_mean(h, mask):
    """Mean of ``h`` (..., n, d) over unmasked positions of ``mask`` (..., n)."""
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=-1)
    if (counts == 0).any():
        raise ValueError("empty attention support")
    weights = (m / counts[..., None])[..., None]
    return sum(scale_rows(h, weights), axis=-2)


# ------------------------------------------------------------------- kernels


def lstm(x, mask, w_ih, w_hh, bias, reverse=False):
    """Unidirectional masked LSTM over ``x`` (B, n, d_in) -> (B, n, h).

    Positions where ``mask`` is false produce zero outputs and leave the
    recurrent state untouched, so padding never leaks into real positions.

    A leading stack axis is supported: ``x`` may be ``(S, B, n, d_in)`` and the
    weights ``(S, d_in, 4h)``, ``(S, h, 4h)``, ``(S, 4h)``; either side may omit
    it and is then shared across the stack. The result is ``(S, B, n, h)``.
    """
    x, w_ih, w_hh, bias = tensor(x), tensor(w_ih), tensor(w_hh), tensor(bias)
    xd, wi, wh, bd = x.data, w_ih.data, w_hh.data, bias.data
    stacked = xd.ndim == 4 or wi.ndim == 3
    x4 = xd if xd.ndim == 4 else xd[None]
    wi3 = wi if wi.ndim == 3 else wi[None]
    wh3 = wh if wh.ndim == 3 else wh[None]
    b2 = bd if bd.ndim == 2 else bd[None]
    xp = np.matmul(x4, wi3[:, None]) + b2[:, None, None, :]
    S, B, n, four_h = xp.shape
    m = np.broadcast_to(np.asarray(mask, dtype=np.float64), (S, B, n))
    whs = np.broadcast_to(wh3, (S,) + wh3.shape[1:])
    out, cache = _accel.lstm_forward(xp, m, whs, reverse)

    def fn(g):
        g4 = g if stacked else g[None]
        d_xp, d_whs = _accel.lstm_backward(g4, m, whs, cache, reverse)
        d_x = _unbroadcast(d_xp @ np.swapaxes(wi3, 1, 2)[:, None], x4.shape)
        xr = x4.reshape(x4.shape[0], B * n, -1)
        d_wi = np.swapaxes(xr, 1, 2) @ d_xp.reshape(S, B * n, four_h)
        return (d_x.reshape(xd.shape),
                _unbroadcast(d_wi, wi3.shape).reshape(wi.shape),
                _unbroadcast(d_whs, wh3.shape).reshape(wh.shape),
                _unbroadcast(d_xp.sum(axis=(1, 2)), b2.shape).reshape(bd.shape))

    return _record(out if stacked else out[0], (x, w_ih, w_hh, bias), fn)


EPS_CLAMP = 1e-12


def bce(probs, targets, weights=None):
    """Weighted-mean binary cross-entropy of probabilities against 0/1 targets.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``; the clamp passes no
    gradient.
    """
    probs = tensor(probs)
    t = np.asarray(targets, dtype=np.float64)
    w = np.ones_like(t) if weights is None else np.asarray(weights, dtype=np.float64)
    total = w.sum()
    p = probs.data
    pc = np.clip(p, EPS_CLAMP, 1.0 - EPS_CLAMP)
    value = -(w * (t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))).sum() / total
    inside = (p >= EPS_CLAMP) & (p <= 1.0 - EPS_CLAMP)

    def fn(g):
        d = w * (-(t / pc) + (1.0 - t) / (1.0 - pc)) / total
        return (g * d * inside,)

    return _record(np.asarray(value), (probs,), fn)


def dropout(a, rate, rng, inverted=True):
    """Standard inverted dropout; identity when ``rate`` is 0 or ``rng`` is None."""
    if rng is None or rate <= 0.0:
        return tensor(a)
    a = tensor(a)
    keep = rng.random(a.shape) >= rate
    factors = keep / (1.0 - rate) if inverted else keep.astype(np.float64)
    return scale_rows(a, factors)
