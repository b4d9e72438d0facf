"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every differentiable operation appends a node to a thread-local tape when
at least one of its inputs requires a gradient.  ``backward`` walks the tape
in reverse recording order, accumulates gradients into every tensor that
requires one, and clears the tape.

Gradients are never updated in place, so a ``grad`` array may safely be
shared between tensors.
"""

import contextlib
import threading

import numpy as np

from .errors import ContractError, DimensionError, ParameterError

__all__ = [
    "Tensor", "Tape", "tape", "no_grad", "is_grad_enabled", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "tanh", "sigmoid", "relu",
    "exp", "log", "sum", "mean", "log_sum_exp", "softmax", "log_softmax",
    "concat", "stack", "reshape", "transpose", "index", "where", "dropout",
    "dropout_mask", "grad_reverse",
]


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of operations awaiting a backward pass."""

    def __init__(self):
        self.nodes = []
        self.enabled = True

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, backward):
        self.nodes.append(_Node(out, inputs, backward))

    def clear(self):
        self.nodes = []


_local = threading.local()


def tape():
    """Return the calling thread's tape."""
    t = getattr(_local, "tape", None)
    if t is None:
        t = _local.tape = Tape()
    return t


def is_grad_enabled():
    return tape().enabled


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording; used for inference and oracles."""
    t = tape()
    prev = t.enabled
    t.enabled = False
    try:
        yield
    finally:
        t.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64, copy=True) if not (
            isinstance(data, np.ndarray) and data.dtype == np.float64) else data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # -- operators ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def tanh(self):
        return tanh(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, inputs, backward_fn):
    out = Tensor(data)
    t = tape()
    if t.enabled and any(i.requires_grad for i in inputs):
        out.requires_grad = True
        t.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _check_axis(x, axis, op):
    if axis is None:
        return
    axes = axis if isinstance(axis, tuple) else (axis,)
    for ax in axes:
        if not -x.ndim <= ax < max(x.ndim, 1):
            raise DimensionError(f"{op}: axis {ax} out of range for shape {x.shape}")


def backward(loss):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

    ``loss`` must hold exactly one element.  The tape is cleared afterwards.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring a gradient")
    t = tape()
    seed = np.ones_like(loss.data)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    try:
        for node in reversed(t.nodes):
            g = node.out.grad
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                inp.grad = gi if inp.grad is None else inp.grad + gi
    finally:
        t.clear()


# -- elementwise arithmetic ------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape(a, b, "div")
    return _result(a.data / b.data, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2:
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(np.matmul(a.data, b.data), (a, b), bw)


# -- nonlinearities --------------------------------------------------------

def tanh(a):
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a):
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a):
    pos = a.data > 0
    return _result(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def exp(a):
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


def log(a):
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


# -- reductions ------------------------------------------------------------

def sum(a, axis=None, keepdims=False):
    _check_axis(a, axis, "sum")

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False):
    _check_axis(a, axis, "mean")
    n = a.data.size if axis is None else int(np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]))
    return mul(sum(a, axis, keepdims), 1.0 / n)


def _lse(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))


def log_sum_exp(a, axis=-1, keepdims=False):
    """log(sum(exp(a))) along ``axis``, shifted by the max to avoid overflow."""
    _check_axis(a, axis, "log_sum_exp")
    lse = _lse(a.data, axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * np.exp(a.data - lse),)

    out = lse if keepdims else np.squeeze(lse, axis=axis)
    return _result(out, (a,), bw)


def softmax(a, axis=-1):
    _check_axis(a, axis, "softmax")
    m = np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(a.data - np.where(np.isfinite(m), m, 0.0))
    y = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result(y, (a,), bw)


def log_softmax(a, axis=-1):
    _check_axis(a, axis, "log_softmax")
    y = a.data - _lse(a.data, axis)

    def bw(g):
        return (g - np.exp(y) * np.sum(g, axis=axis, keepdims=True),)

    return _result(y, (a,), bw)


# -- shape manipulation ----------------------------------------------------

def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no tensors given")
    _check_axis(tensors[0], axis, "concat")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} on axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: shapes {[t.shape for t in tensors]} differ") from exc

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(data, tuple(tensors), bw)


def reshape(a, shape):
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}") from exc
    return _result(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _result(data, (a,), lambda g: (np.transpose(g, inv),))


def _is_basic(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis
               for i in items)


def index(a, idx):
    """``a[idx]`` for basic slices or integer-array (gather) indexing."""
    data = a.data[idx]
    basic = _is_basic(idx)

    def bw(g):
        z = np.zeros_like(a.data)
        if basic:
            z[idx] = g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return _result(np.array(data, dtype=np.float64), (a,), bw)


def where(cond, a, b):
    """Select ``a`` where ``cond`` holds, else ``b``; ``cond`` is constant."""
    a, b = _as_tensor(a), _as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    return _result(np.where(cond, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(np.where(cond, g, 0.0), a.shape),
                              _unbroadcast(np.where(cond, 0.0, g), b.shape)))


# -- regularisation and adversarial plumbing -------------------------------

def dropout_mask(shape, p, key):
    """Inverted-dropout mask drawn from a stream keyed by a tuple of ints.

    The same key always yields the same mask, so a run is reproducible from
    (seed, epoch, batch, layer) alone.
    """
    rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def dropout(a, p, key=None, training=True):
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if key is None:
        raise ParameterError("dropout in training mode needs a mask key")
    return mul(a, dropout_mask(a.shape, p, key))


def grad_reverse(x, lam):
    """Identity on the forward pass; multiplies the gradient by ``-lam``."""
    if not lam >= 0.0:
        raise ParameterError(f"gradient reversal weight must be non-negative, got {lam}")
    return _result(x.data.copy(), (x,), lambda g: (-lam * g,))
