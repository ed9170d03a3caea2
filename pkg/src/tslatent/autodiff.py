"""Reverse-mode automatic differentiation over dense float64 arrays.

The operation graph doubles as the gradient tape: every ``Tensor`` produced
by an operation keeps references to its parents together with the
vector-Jacobian products needed to push gradients back to them. A graph is
owned by whoever built it and is never mutated by a backward sweep, so
independent graphs can be differentiated concurrently and the same graph can
be swept repeatedly (e.g. once per output coordinate when forming a
Jacobian).

Supported shapes are deliberately narrow: scalars, vectors and matrices,
with matrix-vector / matrix-matrix products and same-shape elementwise
arithmetic. No general broadcasting.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, InputError, ShapeError

__all__ = [
    "Tensor",
    "tensor",
    "parameter",
    "constant",
    "affine",
    "gradients",
    "grad_wrt_params",
    "jacobian_vector_products",
    "concat",
    "stack",
    "row",
    "segment",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "sqrt",
    "clip",
    "ssum",
    "dot",
    "transpose",
    "causal_softmax",
]


class Tensor:
    """A node in the differentiation graph wrapping a float64 ndarray.

    ``vjps`` is a tuple of ``(parent, fn)`` pairs where ``fn`` maps the
    gradient at this node to the gradient contribution for ``parent``.
    Leaves have an empty tuple. ``trainable`` marks optimizer parameters.
    """

    __slots__ = ("value", "vjps", "name", "trainable")

    def __init__(self, value, vjps=(), name=None, trainable=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.vjps = vjps
        self.name = name
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.value.shape})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("division by a Tensor is not supported; "
                             "multiply by exp(-log x) or a scalar instead")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(value, name=None):
    """Wrap ``value`` as a non-trainable leaf, rejecting non-finite input."""
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError("non-finite value in tensor input")
    return Tensor(arr, name=name)


def parameter(value, name=None):
    """Wrap ``value`` as a trainable leaf."""
    t = tensor(value, name=name)
    t.trainable = True
    return t


def constant(value):
    """Wrap ``value`` without a finiteness check (internal fast path)."""
    return Tensor(np.asarray(value, dtype=np.float64))


def _as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


# -- primitive operations --------------------------------------------------


def add(a, b):
    if not isinstance(b, Tensor):
        val = a.value + float(b)
        return Tensor(val, vjps=((a, lambda g: g),))
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shapes {a.value.shape} and {b.value.shape} differ")
    return Tensor(a.value + b.value, vjps=((a, lambda g: g), (b, lambda g: g)))


def sub(a, b):
    if not isinstance(b, Tensor):
        return Tensor(a.value - float(b), vjps=((a, lambda g: g),))
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub: shapes {a.value.shape} and {b.value.shape} differ")
    return Tensor(a.value - b.value,
                  vjps=((a, lambda g: g), (b, lambda g: -g)))


def mul(a, b):
    if not isinstance(b, Tensor):
        c = float(b)
        return Tensor(a.value * c, vjps=((a, lambda g: g * c),))
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul: shapes {a.value.shape} and {b.value.shape} differ")
    av, bv = a.value, b.value
    return Tensor(av * bv, vjps=((a, lambda g: g * bv), (b, lambda g: g * av)))


def matmul(a, b):
    av, bv = a.value, b.value
    if av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return Tensor(av @ bv, vjps=(
            (a, lambda g: np.outer(g, bv)),
            (b, lambda g: av.T @ g),
        ))
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return Tensor(av @ bv, vjps=(
            (a, lambda g: g @ bv.T),
            (b, lambda g: av.T @ g),
        ))
    if av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError(f"matmul: {av.shape} @ {bv.shape}")
        return Tensor(av @ bv, vjps=(
            (a, lambda g: bv @ g),
            (b, lambda g: np.outer(av, g)),
        ))
    raise ShapeError(f"matmul: unsupported ranks {av.ndim} and {bv.ndim}")


def affine(W, x, b):
    """Return ``W @ x + b`` for a matrix ``W`` and vectors ``x``, ``b``."""
    if W.value.ndim != 2 or x.value.ndim != 1 or b.value.ndim != 1:
        raise ShapeError("affine expects a matrix, a vector and a vector")
    if W.value.shape[1] != x.value.shape[0] or W.value.shape[0] != b.value.shape[0]:
        raise ShapeError(
            f"affine: W {W.value.shape}, x {x.value.shape}, b {b.value.shape}")
    return add(matmul(W, x), b)


def tanh(a):
    out = np.tanh(a.value)
    return Tensor(out, vjps=((a, lambda g: g * (1.0 - out * out)),))


def sigmoid(a):
    # exp overflow for very negative inputs is harmless: 1/(1+inf) -> 0
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.value))
    return Tensor(out, vjps=((a, lambda g: g * out * (1.0 - out)),))


def exp(a):
    out = np.exp(a.value)
    return Tensor(out, vjps=((a, lambda g: g * out),))


def log(a):
    av = a.value
    return Tensor(np.log(av), vjps=((a, lambda g: g / av),))


def sqrt(a):
    out = np.sqrt(a.value)
    return Tensor(out, vjps=((a, lambda g: g * 0.5 / out),))


def clip(a, lo, hi):
    """Clamp elementwise; gradient is zero outside ``[lo, hi]``."""
    inside = (a.value >= lo) & (a.value <= hi)
    return Tensor(np.clip(a.value, lo, hi),
                  vjps=((a, lambda g: g * inside),))


def ssum(a):
    """Sum all elements into a scalar."""
    shape = a.value.shape
    return Tensor(a.value.sum(), vjps=((a, lambda g: np.full(shape, g)),))


def dot(a, b):
    if a.value.shape != b.value.shape or a.value.ndim != 1:
        raise ShapeError(f"dot: shapes {a.value.shape} and {b.value.shape}")
    av, bv = a.value, b.value
    return Tensor(av @ bv, vjps=((a, lambda g: g * bv), (b, lambda g: g * av)))


def concat(parts):
    """Concatenate vectors into one vector."""
    parts = list(parts)
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    vjps = []
    for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
        vjps.append((p, (lambda a=a, b=b: lambda g: g[a:b])()))
    return Tensor(np.concatenate([p.value for p in parts]), vjps=tuple(vjps))


def stack(rows_):
    """Stack vectors as the rows of a matrix."""
    rows_ = list(rows_)
    vjps = tuple((r, (lambda i=i: lambda g: g[i])()) for i, r in enumerate(rows_))
    return Tensor(np.stack([r.value for r in rows_]), vjps=vjps)


def row(m, i):
    """Extract row ``i`` of a matrix as a vector."""
    if m.value.ndim != 2:
        raise ShapeError("row expects a matrix")
    shape = m.value.shape

    def vjp(g):
        out = np.zeros(shape)
        out[i] = g
        return out

    return Tensor(m.value[i], vjps=((m, vjp),))


def segment(a, start, stop):
    """Slice a vector to ``a[start:stop]``."""
    if a.value.ndim != 1:
        raise ShapeError("segment expects a vector")
    n = a.value.shape[0]

    def vjp(g):
        out = np.zeros(n)
        out[start:stop] = g
        return out

    return Tensor(a.value[start:stop], vjps=((a, vjp),))


def transpose(m):
    if m.value.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return Tensor(m.value.T, vjps=((m, lambda g: g.T),))


def causal_softmax(scores):
    """Row-wise softmax over the lower triangle of a square score matrix.

    Row ``i`` distributes attention over columns ``0..i``; masked entries
    get exactly zero weight and no gradient.
    """
    s = scores.value
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError("causal_softmax expects a square matrix")
    n = s.shape[0]
    mask = np.tril(np.ones((n, n), dtype=bool))
    shifted = np.where(mask, s, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * p).sum(axis=1, keepdims=True)
        return p * (g - inner)

    return Tensor(p, vjps=((scores, vjp),))


# -- backward sweeps -------------------------------------------------------


def _topo_order(root):
    """Nodes reachable from ``root``, parents after children (build order)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.vjps:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(output, seed=None):
    """Sweep the graph once, returning a map ``id(node) -> gradient``.

    ``seed`` is the gradient at ``output`` (defaults to 1 for scalars).
    """
    if seed is None:
        if output.value.shape != ():
            raise ContractError("a non-scalar output needs an explicit seed")
        seed = np.float64(1.0)
    else:
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != output.value.shape:
            raise ShapeError(
                f"seed shape {seed.shape} != output shape {output.value.shape}")

    acc = {id(output): seed}
    for node in reversed(_topo_order(output)):
        g = acc.get(id(node))
        if g is None:
            continue
        for parent, vjp in node.vjps:
            contrib = vjp(g)
            key = id(parent)
            prev = acc.get(key)
            acc[key] = contrib if prev is None else prev + contrib
    return acc


def grad_wrt_params(loss):
    """Gradients of a scalar loss with respect to every reachable parameter.

    Returns ``{param_tensor: ndarray}``. Parameters not touched by the loss
    path but present in the graph get zero gradients.
    """
    if loss.value.shape != ():
        raise ContractError("grad_wrt_params expects a scalar loss")
    order = _topo_order(loss)
    acc = gradients(loss)
    out = {}
    for node in order:
        if node.trainable:
            g = acc.get(id(node))
            out[node] = np.zeros_like(node.value) if g is None else g
    return out


def jacobian_vector_products(output, inputs):
    """Jacobian of a vector-valued node restricted to the listed inputs.

    For each input leaf returns an array of shape ``(len(output),) +
    input.shape`` holding the gradient of every output coordinate. Raises
    ``ContractError`` if an input is not reachable from ``output``.
    """
    if output.value.ndim != 1:
        raise ContractError("jacobian_vector_products expects a vector output")
    reachable = {id(n) for n in _topo_order(output)}
    for inp in inputs:
        if id(inp) not in reachable:
            raise ContractError("input not reachable from output")
    n = output.value.shape[0]
    jacs = [np.zeros((n,) + inp.value.shape) for inp in inputs]
    for i in range(n):
        seed = np.zeros(n)
        seed[i] = 1.0
        acc = gradients(output, seed)
        for jac, inp in zip(jacs, inputs):
            g = acc.get(id(inp))
            if g is not None:
                jac[i] = g
    return jacs
