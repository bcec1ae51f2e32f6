"""Parameter containers and the handful of layers the models share.

Modules auto-register parameters and submodules by attribute assignment,
so `named_parameters()` yields stable dotted names in construction order —
the names the checkpoint manifest, freezing policy, and byte-diff tests
all key on.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, (Module, ModuleList)):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name if prefix else name), p
        for name, mod in self._modules.items():
            sub = prefix + name + "." if prefix else name + "."
            yield from mod.named_parameters(sub)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def set_requires_grad(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag


class ModuleList:
    def __init__(self, modules):
        self.items = list(modules)

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def named_parameters(self, prefix: str = ""):
        for i, mod in enumerate(self.items):
            yield from mod.named_parameters(f"{prefix}{i}.")


def param(data, requires_grad: bool = True) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


class Linear(Module):
    """y = x @ W.T + b, weight (out, in) ~ N(0, 1/sqrt(in))."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = param(rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_out, d_in)))
        self.bias = param(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = T.matmul(x, T.transpose(self.weight, (1, 0)))
        if self.bias is not None:
            y = T.add(y, self.bias)
        return y

    __call__ = forward


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, std: float = 1.0):
        super().__init__()
        self.n, self.d = n, d
        self.table = param(rng.normal(0.0, std, (n, d)))

    def forward(self, ids) -> Tensor:
        return T.take_rows(self.table, np.asarray(ids, dtype=np.int64))

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.gamma = param(np.ones(d))
        self.beta = param(np.zeros(d))

    def forward(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta)

    __call__ = forward


class FeedForward(Module):
    """Two-layer MLP with SiLU."""

    def __init__(self, d: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.lin1 = Linear(d, d_ff, rng)
        self.lin2 = Linear(d_ff, d, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.lin2(T.silu(self.lin1(x)))

    __call__ = forward


def causal_mask(s: int) -> np.ndarray:
    """(S, S) bool, True above the diagonal = blocked future positions."""
    return np.triu(np.ones((s, s), dtype=bool), k=1)


class MultiHeadSelfAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if d % heads != 0:
            raise T.ShapeError(f"attention: model dim {d} not divisible by {heads} heads")
        self.d, self.heads, self.dh = d, heads, d // heads
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        s = x.shape[0]
        h, dh = self.heads, self.dh

        def split(t):  # (S, d) -> (h, S, dh)
            return T.transpose(T.reshape(t, (s, h, dh)), (1, 0, 2))

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(dh))
        if mask is not None:
            scores = T.masked_fill(scores, np.broadcast_to(mask, (h, s, s)), T.NEG_FILL)
        out = T.matmul(T.softmax(scores), v)  # (h, S, dh)
        out = T.reshape(T.transpose(out, (1, 0, 2)), (s, self.d))
        return self.wo(out)

    __call__ = forward


class DecoderLayer(Module):
    """Pre-norm transformer decoder layer: x += attn(ln(x)); x += ffn(ln(x))."""

    def __init__(self, d: int, heads: int, d_ff: int, rng: np.random.Generator):
        super().__init__()
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ffn = FeedForward(d, d_ff, rng)

    def forward(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = T.add(x, self.attn(self.ln1(x), mask))
        x = T.add(x, self.ffn(self.ln2(x)))
        return x

    __call__ = forward


def cross_entropy_masked(logits: Tensor, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over positions where mask is True.

    logits (S, V), targets (S,) int, mask (S,) bool. Masked positions
    contribute nothing to the loss or its gradient.
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("cross_entropy_masked: all positions masked")
    picked = T.gather_last(T.log_softmax(logits), targets)
    kept = T.mul(picked, Tensor(mask.astype(np.float64)))
    return T.scale(T.tsum(kept), -1.0 / count)
