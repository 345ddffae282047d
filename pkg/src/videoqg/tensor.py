"""Dense float64 tensors with a tape-based reverse-mode autodiff.

Only the operations the question-generation models need are provided.
Broadcasting is deliberately narrow: an operand may be missing leading
dimensions, or carry 1-length leading dimensions, but every trailing
dimension it does have must match the other operand exactly. So a bias of
shape ``(d,)`` adds onto ``(B, n, d)`` and ``(1, n, d)`` onto ``(B, n, d)``,
while ``(B, 1)`` never broadcasts against ``(B, d)``.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "ShapeError",
    "no_grad",
    "grad_enabled",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "matmul",
    "transpose",
    "reshape",
    "tanh",
    "sigmoid",
    "relu",
    "exp",
    "softmax_lastdim",
    "log_softmax_lastdim",
    "sum",
    "mean_over_axis",
    "concat",
    "concat_lastdim",
    "stack",
    "index",
    "take_lastdim",
    "embedding_lookup",
    "layer_norm",
    "dropout",
    "backward",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording on this thread (inference)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_over_axis(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A named leaf tensor that always tracks gradients."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    n = max(len(a), len(b))
    pa = (1,) * (n - len(a)) + a
    pb = (1,) * (n - len(b)) + b
    out = tuple(max(x, y) for x, y in zip(pa, pb))
    for padded in (pa, pb):
        lead = 0
        while lead < n and padded[lead] == 1:
            lead += 1
        if padded[lead:] != out[lead:]:
            raise ShapeError(f"cannot broadcast shapes {a} and {b}: only leading dimensions broadcast")
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _make(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), _bw)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make(-x.data, (x,), lambda g: _accumulate(x, -g))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: _accumulate(x, g * c))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: _accumulate(x, g * (1.0 - y * y)))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # tanh form avoids exp overflow for large |x|
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(y, (x,), lambda g: _accumulate(x, g * y * (1.0 - y)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    on = x.data > 0
    return _make(np.where(on, x.data, 0.0), (x,), lambda g: _accumulate(x, g * on))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: _accumulate(x, g * y))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes are batch axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if a.ndim > 2 and b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch mismatch: {a.shape} @ {b.shape}")

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            _accumulate(b, gb)

    return _make(a.data @ b.data, (a, b), _bw)


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got {x.shape}")
    return _make(np.swapaxes(x.data, -1, -2), (x,), lambda g: _accumulate(x, np.swapaxes(g, -1, -2)))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(old)))


# ---------------------------------------------------------------- normalisers


def softmax_lastdim(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along the last axis, computed with max subtraction.

    ``mask`` is a boolean array broadcastable to ``x``; False entries get
    probability exactly zero. Every row must keep at least one entry.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _bw(g):
        _accumulate(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _make(y, (x,), _bw)


def log_softmax_lastdim(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def _bw(g):
        _accumulate(x, g - np.exp(y) * g.sum(axis=-1, keepdims=True))

    return _make(y, (x,), _bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise each last-axis slice to zero mean and unit variance, then apply gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias must be ({d},), got {gain.shape} and {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def _bw(g):
        if x.requires_grad:
            dxhat = g * gain.data
            dx = inv / d * (
                d * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            _accumulate(x, dx)
        if gain.requires_grad:
            _accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, d).sum(axis=0))

    return _make(xhat * gain.data + bias.data, (x, gain, bias), _bw)


# ---------------------------------------------------------------- reductions & structure


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    y = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))
    shape = x.shape

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, shape).copy())

    return _make(y, (x,), _bw)


def mean_over_axis(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in axes:
            if not -x.ndim <= ax < x.ndim:
                raise ShapeError(f"axis {ax} out of range for shape {x.shape}")
        count = int(np.prod([x.shape[ax] for ax in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of zero tensors")
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise ShapeError(f"concat shape mismatch along axis {axis}: {[t.shape for t in ts]}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def _bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, _bw)


def concat_lastdim(tensors: Sequence) -> Tensor:
    return concat(tensors, axis=-1)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("stack of zero tensors")
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ShapeError(f"stack shape mismatch: {[t.shape for t in ts]}")
    out = np.stack([t.data for t in ts], axis=axis)
    ax = axis % out.ndim

    def _bw(g):
        for i, t in enumerate(ts):
            if t.requires_grad:
                _accumulate(t, np.take(g, i, axis=ax))

    return _make(out, ts, _bw)


def index(x, idx) -> Tensor:
    """Numpy-style indexing; gradients scatter back (duplicates accumulate)."""
    x = as_tensor(x)
    if isinstance(idx, Tensor):
        raise TypeError("index with a Tensor is not supported; pass a numpy array")
    shape = x.shape

    basic = _is_basic_index(idx)

    def _bw(g):
        full = np.zeros(shape)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        _accumulate(x, full)

    return _make(np.array(x.data[idx]), (x,), _bw)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is Ellipsis for i in items)


def take_lastdim(x, ids: np.ndarray) -> Tensor:
    """Pick ``x[..., ids[...]]``: one entry of the last axis per leading position."""
    x = as_tensor(x)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != x.shape[:-1]:
        raise ShapeError(f"take_lastdim ids shape {ids.shape} must equal {x.shape[:-1]}")
    picked = np.take_along_axis(x.data, ids[..., None], axis=-1)[..., 0]

    def _bw(g):
        full = np.zeros(x.shape)
        np.put_along_axis(full, ids[..., None], g[..., None], axis=-1)
        _accumulate(x, full)

    return _make(picked, (x,), _bw)


def embedding_lookup(table, ids) -> Tensor:
    """Rows of ``table`` for each id; output shape is ``ids.shape + (d,)``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    n_rows, d = table.shape
    if ids.size:
        bad = ids[(ids < 0) | (ids >= n_rows)]
        if bad.size:
            raise IndexError(f"id {int(bad[0])} out of range for vocabulary of size {n_rows}")

    def _bw(g):
        full = np.zeros(table.shape)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, d))
        _accumulate(table, full)

    return _make(table.data[ids.reshape(-1)].reshape(ids.shape + (d,)), (table,), _bw)


def dropout(x, p: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``p == 0`` or ``rng`` is None."""
    x = as_tensor(x)
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * keep, (x,), lambda g: _accumulate(x, g * keep))


# ---------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable leaf ``t``.

    Leaf gradients accumulate across calls; zero them between steps.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    for node in order:
        if not node.is_leaf:
            node.grad = None
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def finite_difference_check(
    fn: Callable[[], Tensor],
    params: Iterable[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Compare analytic gradients of ``fn()`` against central differences.

    Returns one relative error per parameter, ``|a - n| / max(|a|, |n|)``
    in the 2-norm over the checked coordinates (0 when both vanish).
    With ``max_coords`` set, only that many random coordinates per
    parameter are perturbed.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    backward(fn())
    errors = []
    for p in params:
        flat = p.data.flat
        size = p.data.size
        coords = np.arange(size)
        if max_coords is not None and size > max_coords:
            coords = (rng or np.random.default_rng(0)).choice(size, size=max_coords, replace=False)
        analytic = p.grad.reshape(-1)[coords]
        numeric = np.empty(len(coords))
        with no_grad():
            for j, c in enumerate(coords):
                orig = flat[c]
                flat[c] = orig + h
                up = fn().item()
                flat[c] = orig - h
                down = fn().item()
                flat[c] = orig
                numeric[j] = (up - down) / (2 * h)
        denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        errors.append(0.0 if denom < 1e-12 else float(np.linalg.norm(analytic - numeric) / denom))
    return errors
