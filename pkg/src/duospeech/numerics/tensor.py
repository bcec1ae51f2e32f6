"""Minimal dense-tensor engine with reverse-mode differentiation.

All values are float64 numpy arrays in row-major order. The graph is
dynamic: every op records its parents and a vector-Jacobian closure, and
``backward`` walks the tape once per call. Gradients accumulate on leaf
tensors across backward calls; non-leaf tensors do not retain gradients.

Every op validates shapes up front and checks its output for NaN/Inf, so
a non-finite value surfaces at the op that produced it rather than three
layers downstream.
"""

from __future__ import annotations

import numpy as np

# Finite stand-in for -inf when masking attention scores. exp(NEG_FILL - m)
# underflows to exactly 0.0 for any row max m >= NEG_FILL / 2, which keeps
# masked positions at exactly zero weight without ever storing an Inf.
NEG_FILL = -1e30

LAYER_NORM_EPS = 1e-5


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""


class NonFiniteError(ArithmeticError):
    """A tensor value became NaN or Inf."""


def _as_f64(data) -> np.ndarray:
    # note: np.ascontiguousarray would promote 0-d arrays to 1-d
    return np.asarray(data, dtype=np.float64, order="C")


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op}: produced non-finite values")


class Tensor:
    """Dense f64 array plus optional gradient and autograd tape entry."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        _check_finite(self.data, "tensor")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None  # callable(grad_out) -> tuple of parent grads

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor has shape {self.shape}, not scalar")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        ``self`` must be scalar. Repeated calls accumulate: calling twice
        leaves every leaf with exactly twice the gradient of one call.
        """
        if self.data.shape != ():
            raise ShapeError(
                f"backward: loss must be scalar, got shape {self.data.shape}"
            )
        order = _topo_order(self)
        flowing: dict[int, np.ndarray] = {id(self): np.ones((), dtype=np.float64)}
        for node in order:
            g = flowing.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            parent_grads = node._vjp(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None:
                    continue
                key = id(parent)
                if key in flowing:
                    flowing[key] = flowing[key] + pg
                else:
                    flowing[key] = pg

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below are the canonical surface.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reverse topological order from root, iterative to spare the stack."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    else:
        out._parents = ()
        out._vjp = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _broadcast_ok(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    try:
        np.broadcast_shapes(a, b)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# Elementwise and arithmetic ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not broadcast")
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), vjp, "mul")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = a.data * s

    def vjp(g):
        return (g * s,)

    return _make(out, (a,), vjp, "scale")


def pow_const(a: Tensor, p: float) -> Tensor:
    p = float(p)
    out = a.data**p

    def vjp(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(out, (a,), vjp, "pow")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp, "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), vjp, "sigmoid")


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x) — the engine's one nonlinearity (Swish / SiLU)."""
    sig = 1.0 / (1.0 + np.exp(-a.data))
    out = a.data * sig

    def vjp(g):
        return (g * sig * (1.0 + a.data * (1.0 - sig)),)

    return _make(out, (a,), vjp, "silu")


def round_ste(a: Tensor) -> Tensor:
    """Round half away from zero; gradient is identity (straight-through)."""
    out = np.sign(a.data) * np.floor(np.abs(a.data) + 0.5)

    def vjp(g):
        return (g,)

    return _make(out, (a,), vjp, "round_ste")


# ---------------------------------------------------------------------------
# Linear algebra and reductions
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ: {a.shape} vs {b.shape}")
    if not _broadcast_ok(a.shape[:-2], b.shape[:-2]):
        raise ShapeError(f"matmul: batch dims differ: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return _make(out, (a, b), vjp, "matmul")


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(out, (a,), vjp, "sum")


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    out = a.data.mean(axis=axis)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / n, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy(),)

    return _make(out, (a,), vjp, "mean")


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), vjp, "concat")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), vjp, "reshape")


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = a.data.transpose(axes)
    inv = np.argsort(axes)

    def vjp(g):
        return (g.transpose(inv),)

    return _make(out, (a,), vjp, "transpose")


# ---------------------------------------------------------------------------
# Indexing
# ---------------------------------------------------------------------------


def _check_ids(ids: np.ndarray, n: int, op: str) -> np.ndarray:
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"{op}: indices must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise IndexError(f"{op}: index out of range [0, {n})")
    return ids


def take_rows(table: Tensor, ids) -> Tensor:
    """Row gather: embedding lookup when `table` is an embedding matrix,
    row slicing when `ids` is a position range."""
    ids = _check_ids(ids, table.shape[0], "take_rows")
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _make(out, (table,), vjp, "take_rows")


def gather_last(a: Tensor, ids) -> Tensor:
    """Per-row element pick over the last axis of a 2-D tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"gather_last: expected 2-D tensor, got {a.shape}")
    ids = _check_ids(ids, a.shape[1], "gather_last")
    if ids.shape != (a.shape[0],):
        raise ShapeError(
            f"gather_last: ids shape {ids.shape} does not match rows {a.shape[0]}"
        )
    rows = np.arange(a.shape[0])
    out = a.data[rows, ids]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[rows, ids] = g
        return (ga,)

    return _make(out, (a,), vjp, "gather_last")


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where `mask` is True with `value`; no gradient flows
    through filled positions."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError(
            f"masked_fill: mask shape {mask.shape} does not match {a.shape}"
        )
    out = np.where(mask, float(value), a.data)

    def vjp(g):
        return (np.where(mask, 0.0, g),)

    return _make(out, (a,), vjp, "masked_fill")


# ---------------------------------------------------------------------------
# Normalization and softmax
# ---------------------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.

    The +eps denominator means a constant row maps to zeros (before affine)
    instead of NaN.
    """
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: affine shapes {gamma.shape}/{beta.shape} do not match last axis {d}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gamma.data + beta.data

    def vjp(g):
        dgamma = (g * xhat).reshape(-1, d).sum(axis=0)
        dbeta = g.reshape(-1, d).sum(axis=0)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), vjp, "layer_norm")


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (x,), vjp, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def vjp(g):
        return (g - sm * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), vjp, "log_softmax")


# ---------------------------------------------------------------------------
# Convolutions over time
# ---------------------------------------------------------------------------


def conv1d_out_len(t_in: int, kernel: int, stride: int) -> int:
    """Output length for an unpadded strided conv: floor((T - K) / s) + 1."""
    return (t_in - kernel) // stride + 1


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int) -> Tensor:
    """Strided 1-D convolution, no padding. x (T, Cin), w (Cout, K, Cin),
    b (Cout,) -> (T', Cout) with T' = floor((T - K) / stride) + 1."""
    t_in, c_in = x.shape
    c_out, k, c_in_w = w.shape
    if c_in_w != c_in:
        raise ShapeError(f"conv1d: channel mismatch: input {x.shape} vs weight {w.shape}")
    if t_in < k:
        raise ShapeError(f"conv1d: input length {t_in} shorter than kernel {k}")
    t_out = conv1d_out_len(t_in, k, stride)
    starts = np.arange(t_out) * stride
    win_idx = starts[:, None] + np.arange(k)[None, :]  # (T', K)
    cols = x.data[win_idx]  # (T', K, Cin)
    wmat = w.data.reshape(c_out, k * c_in)
    out = cols.reshape(t_out, k * c_in) @ wmat.T + b.data

    def vjp(g):
        gw = (g.T @ cols.reshape(t_out, k * c_in)).reshape(c_out, k, c_in)
        gb = g.sum(axis=0)
        gcols = (g @ wmat).reshape(t_out, k, c_in)
        gx = np.zeros_like(x.data)
        np.add.at(gx, win_idx, gcols)
        return gx, gw, gb

    return _make(out, (x, w, b), vjp, "conv1d")


def depthwise_conv1d(x: Tensor, w: Tensor) -> Tensor:
    """Per-channel conv along time with 'same' zero padding. x (T, C),
    w (K, C) with odd K -> (T, C)."""
    t, c = x.shape
    k, c_w = w.shape
    if c_w != c:
        raise ShapeError(f"depthwise_conv1d: channel mismatch: {x.shape} vs {w.shape}")
    if k % 2 != 1:
        raise ShapeError(f"depthwise_conv1d: kernel must be odd, got {k}")
    pad = k // 2
    xpad = np.zeros((t + 2 * pad, c))
    xpad[pad : pad + t] = x.data
    out = np.zeros((t, c))
    for j in range(k):
        out += xpad[j : j + t] * w.data[j]

    def vjp(g):
        gw = np.empty_like(w.data)
        gxpad = np.zeros_like(xpad)
        for j in range(k):
            gw[j] = (g * xpad[j : j + t]).sum(axis=0)
            gxpad[j : j + t] += g * w.data[j]
        return np.ascontiguousarray(gxpad[pad : pad + t]), gw

    return _make(out, (x, w), vjp, "depthwise_conv1d")
