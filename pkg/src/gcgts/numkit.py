"""Small dense-tensor engine with reverse-mode autodiff and Adam.

Arrays are stored as numpy buffers; every differentiable operation the grid
model needs is defined here together with its adjoint.  Each tensor carries a
monotonically increasing sequence number, so sorting the reachable graph by
that number gives a valid tape order (parents are always created first).
"""

from __future__ import annotations

import hashlib
import itertools
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor", "DimensionError", "ContractError",
    "tensor", "parameter", "matmul", "add", "mul", "relu", "concat", "max_over",
    "sum_all", "reshape", "transpose", "expand", "take", "pair_concat", "shift",
    "softmax", "masked_softmax", "cross_entropy", "backward", "Adam",
    "glorot_uniform", "rng_for",
]

_seq = itertools.count()


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(RuntimeError):
    """An operation was called outside its contract (bad loss, missing grad...)."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "_adjoint", "seq",
                 "name", "_consumed")

    def __init__(self, data, requires_grad=False, parents=(), adjoint=None, name=None):
        self.data = np.asarray(data)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.parents: tuple = parents
        self._adjoint: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = adjoint
        self.seq = next(_seq)
        self.name = name
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_lift(other, self.dtype), -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def tensor(data, dtype=np.float32, requires_grad=False, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=requires_grad, name=name)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data), requires_grad=True, name=name)


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data, parents, adjoint) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=tuple(parents), adjoint=adjoint)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", np.float32))
    b = _lift(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data + b.data

    def adjoint(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), adjoint)


def mul(a, b) -> Tensor:
    a = _lift(a, getattr(b, "dtype", np.float32))
    b = _lift(b, a.dtype)
    _check_broadcast(a, b)
    out = a.data * b.data.astype(a.dtype, copy=False)

    def adjoint(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(out, (a, b), adjoint)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., k] @ b[k, n]``; leading axes of ``a`` act as a batch."""
    if b.data.ndim != 2 or a.data.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def adjoint(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _node(out, (a, b), adjoint)


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, 0).astype(x.dtype)

    def adjoint(g):
        return (g * pos,)

    return _node(out, (x,), adjoint)


def concat(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    xs = list(xs)
    lead = xs[0].shape[:-1]
    for x in xs[1:]:
        if x.shape[:-1] != lead:
            raise DimensionError(
                f"concat needs equal leading shapes, got {[x.shape for x in xs]}")
    out = np.concatenate([x.data for x in xs], axis=-1)
    bounds = np.cumsum([0] + [x.shape[-1] for x in xs])

    def adjoint(g):
        return tuple(g[..., lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return _node(out, tuple(xs), adjoint)


def sum_all(x: Tensor, axis=None) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis))

    def adjoint(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _node(out, (x,), adjoint)


def max_over(x: Tensor, axis: int, where: Optional[np.ndarray] = None) -> Tensor:
    """Max over ``axis``; entries with ``where == 0`` are ignored.

    A slice with no admissible entry yields 0.  Ties send the gradient to the
    first maximal index.
    """
    axis = axis % x.data.ndim
    if where is None:
        valid = np.ones(x.shape, dtype=bool)
    else:
        valid = np.broadcast_to(np.asarray(where, dtype=bool), x.shape)
    filled = np.where(valid, x.data, -np.inf)
    idx = np.argmax(filled, axis=axis)
    any_valid = valid.any(axis=axis)
    picked = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = np.where(any_valid, picked, 0).astype(x.dtype)

    def adjoint(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis),
                          np.expand_dims(g * any_valid, axis), axis=axis)
        return (gx,)

    return _node(out, (x,), adjoint)


# ------------------------------------------------------------ shape plumbing

def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from None

    def adjoint(g):
        return (g.reshape(x.shape),)

    return _node(out, (x,), adjoint)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(x.data.transpose(axes))

    def adjoint(g):
        return (g.transpose(inverse),)

    return _node(out, (x,), adjoint)


def expand(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise DimensionError(f"cannot expand {x.shape} to {shape}") from None

    def adjoint(g):
        return (_unbroadcast(g, x.shape),)

    return _node(out, (x,), adjoint)


def take(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row index out of range for table of {table.shape[0]} rows")
    out = table.data[ids]

    def adjoint(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _node(out, (table,), adjoint)


def pair_concat(a: Tensor, b: Tensor) -> Tensor:
    """``out[i, j] = a[i] || b[j]`` for row matrices ``a`` (n×p) and ``b`` (m×q)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"pair_concat expects matrices, got {a.shape} and {b.shape}")
    n, p = a.shape
    m, q = b.shape
    out = np.concatenate([
        np.broadcast_to(a.data[:, None, :], (n, m, p)),
        np.broadcast_to(b.data[None, :, :], (n, m, q)),
    ], axis=-1)

    def adjoint(g):
        return g[..., :p].sum(axis=1), g[..., p:].sum(axis=0)

    return _node(out, (a, b), adjoint)


def shift(x: Tensor, axis: int, k: int) -> Tensor:
    """``out[..., i, ...] = x[..., i + k, ...]`` with zeros past the end (k ≥ 0)."""
    axis = axis % x.data.ndim
    size = x.shape[axis]
    out = np.zeros_like(x.data)
    if k < size:
        dst = [slice(None)] * x.data.ndim
        src = [slice(None)] * x.data.ndim
        dst[axis] = slice(0, size - k)
        src[axis] = slice(k, size)
        out[tuple(dst)] = x.data[tuple(src)]
    else:
        dst = src = None

    def adjoint(g):
        gx = np.zeros_like(x.data)
        if dst is not None:
            gx[tuple(src)] = g[tuple(dst)]
        return (gx,)

    return _node(out, (x,), adjoint)


# ------------------------------------------------------ probability helpers

def masked_softmax(logits: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis restricted to ``mask == 1``.

    The shift constant is the max over admissible entries.  Rows whose mask is
    all zero come out as exact zero vectors.
    """
    x = logits.data
    if mask is None:
        m = np.ones(x.shape, dtype=bool)
    else:
        mask = np.asarray(mask)
        try:
            m = np.broadcast_to(mask.astype(bool), x.shape)
        except ValueError:
            raise DimensionError(f"mask shape {mask.shape} vs logits {x.shape}") from None
    shifted = np.where(m, x, -np.inf)
    # only rows with no admissible entry are zeroed; NaN logits must propagate
    live = m.any(axis=-1, keepdims=True)
    c = np.where(live, shifted.max(axis=-1, keepdims=True), 0)
    e = np.where(m, np.exp(np.where(m, x - c, 0)), 0)
    z = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, z, out=np.zeros_like(e), where=live & m).astype(x.dtype)

    def adjoint(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (logits,), adjoint)


def softmax(logits: Tensor) -> Tensor:
    return masked_softmax(logits, None)


def cross_entropy(probs: Tensor, target, weight=None, eps: float = 1e-12) -> Tensor:
    """Summed ``-log(max(p[target], eps))`` over the leading cells.

    ``probs`` has shape (..., C) and ``target`` integer shape (...).  ``weight``
    (0/1, same shape as target) selects which cells contribute.
    """
    target = np.asarray(target, dtype=np.int64)
    C = probs.shape[-1]
    if target.shape != probs.shape[:-1]:
        raise DimensionError(f"target shape {target.shape} vs probs {probs.shape}")
    if target.size and (target.min() < 0 or target.max() >= C):
        raise IndexError(f"target index out of range for {C} classes")
    w = np.ones(target.shape) if weight is None else np.asarray(weight)
    if w.shape != target.shape:
        raise DimensionError(f"weight shape {w.shape} vs target {target.shape}")
    picked = np.take_along_axis(probs.data, target[..., None], axis=-1)[..., 0]
    clamped = np.maximum(picked, eps)
    out = np.asarray(-(w * np.log(clamped)).sum(), dtype=probs.dtype)

    def adjoint(g):
        gp = np.zeros_like(probs.data)
        local = np.where(picked > eps, -w / clamped, 0.0) * g
        np.put_along_axis(gp, target[..., None], local[..., None].astype(gp.dtype), axis=-1)
        return (gp,)

    return _node(out, (probs,), adjoint)


# ------------------------------------------------------------------ backward

def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise ContractError("backward already ran on this loss; run a fresh forward pass")
    loss._consumed = True
    if not loss.requires_grad:
        return

    seen = {id(loss): loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    tape = sorted(seen.values(), key=lambda t: t.seq, reverse=True)

    adj: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in tape:
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if node._adjoint is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node._adjoint(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in adj:
                adj[key] = adj[key] + pg
            else:
                adj[key] = pg


# ------------------------------------------------------------ initialization

def rng_for(seed: int, name: str) -> np.random.Generator:
    """Independent 64-bit stream per (seed, parameter name)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF] + words)))


def glorot_uniform(shape, seed: int, name: str, dtype=np.float32) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng_for(seed, name).uniform(-limit, limit, size=shape).astype(dtype)


# ----------------------------------------------------------------- optimizer

class Adam:
    """Plain Adam over a name → Tensor mapping."""

    def __init__(self, params: Dict[str, Tensor], lr=5e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, grads: Optional[Dict[str, np.ndarray]] = None):
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        missing = [k for k in self.params if grads.get(k) is None]
        if missing:
            raise ContractError(f"no gradient for parameter(s): {', '.join(missing)}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in self.params.items():
            g = grads[k].astype(p.dtype, copy=False)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            p.data = (p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


def zero_grads(params: Iterable[Tensor]):
    for p in params:
        p.grad = None
