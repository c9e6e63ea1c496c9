"""Minimal reverse-mode differentiation over numpy arrays.

Every tensor operation in the package is written against the functions in
this module.  Called with plain ``ndarray`` inputs they return plain arrays;
if any input is a :class:`Var` the result is a :class:`Var` that remembers
how to push gradients back to its parents.  Layers therefore get exact
backward passes by composition of the primitive vector-Jacobian products
below, with no second hand-written code path.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class Var:
    """A node in the computation graph holding a float64 array."""

    __slots__ = ("value", "grad", "parents", "vjps")
    __array_priority__ = 100.0

    def __init__(self, value, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.vjps = tuple(vjps)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Var(shape={self.shape})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every ancestor."""
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = _toposort(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if vjp is None:
                    continue
                contrib = vjp(g)
                key = id(parent)
                grads[key] = contrib if key not in grads else grads[key] + contrib

    # arithmetic sugar used by the training code
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, negative(other))

    def __rsub__(self, other):
        return add(other, negative(self))

    def __mul__(self, other):
        return multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return negative(self)


def _toposort(root):
    order, seen = [], set()
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
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order[::-1]


def is_var(x):
    return isinstance(x, Var)


def value(x):
    """Underlying ndarray of ``x`` (works on Var and array alike)."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _wrap(out, args, vjps):
    """Return ``out`` as a Var if any of ``args`` is one."""
    parents, fns = [], []
    for a, fn in zip(args, vjps):
        if isinstance(a, Var):
            parents.append(a)
            fns.append(fn)
    if not parents:
        return out
    return Var(out, parents, fns)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def reshape(x, shape):
    xv = value(x)
    out = xv.reshape(shape)
    return _wrap(out, (x,), (lambda g: g.reshape(xv.shape),))


def transpose(x, axes):
    axes = tuple(axes)
    out = value(x).transpose(axes)
    inv = tuple(np.argsort(axes))
    return _wrap(out, (x,), (lambda g: g.transpose(inv),))


class FlopCounter:
    """Running total of multiply-add work (2 flops per MAC) in forward ops."""

    def __init__(self):
        self.flops = 0
        self.calls = 0


_COUNTERS = []


def _tally(n):
    for c in _COUNTERS:
        c.flops += int(n)
        c.calls += 1


@contextmanager
def count_flops():
    """Measure the forward multiply-adds of ``tensordot`` and ``conv2d``.

    >>> with count_flops() as c:
    ...     _ = tensordot(np.ones((2, 3)), np.ones((3, 4)), ([1], [0]))
    >>> c.flops
    48
    """
    c = FlopCounter()
    _COUNTERS.append(c)
    try:
        yield c
    finally:
        _COUNTERS.remove(c)


def tensordot(a, b, axes):
    """``np.tensordot`` with explicit axis lists ``(axes_a, axes_b)``."""
    av, bv = value(a), value(b)
    axa, axb = (list(axes[0]), list(axes[1]))
    out = np.tensordot(av, bv, axes=(axa, axb))
    _tally(2 * out.size * int(np.prod([av.shape[i] for i in axa])))
    free_a = [i for i in range(av.ndim) if i not in axa]
    free_b = [i for i in range(bv.ndim) if i not in axb]
    na = len(free_a)

    def vjp_a(g):
        # g modes: free_a ++ free_b; leftover b modes come out in sorted order
        r = np.tensordot(g, bv, axes=(list(range(na, g.ndim)), free_b))
        perm_src = free_a + [axa[axb.index(j)] for j in sorted(axb)]
        return r.transpose(np.argsort(perm_src))

    def vjp_b(g):
        r = np.tensordot(av, g, axes=(free_a, list(range(na))))
        perm_src = [axb[axa.index(j)] for j in sorted(axa)] + free_b
        return r.transpose(np.argsort(perm_src))

    return _wrap(out, (a, b), (vjp_a, vjp_b))


def add(a, b):
    av, bv = value(a), value(b)
    out = av + bv
    return _wrap(
        out,
        (a, b),
        (lambda g: _unbroadcast(g, av.shape), lambda g: _unbroadcast(g, bv.shape)),
    )


def negative(x):
    return _wrap(-value(x), (x,), (lambda g: -g,))


def multiply(a, b):
    av, bv = value(a), value(b)
    out = av * bv
    return _wrap(
        out,
        (a, b),
        (
            lambda g: _unbroadcast(g * bv, av.shape),
            lambda g: _unbroadcast(g * av, bv.shape),
        ),
    )


def tanh(x):
    out = np.tanh(value(x))
    return _wrap(out, (x,), (lambda g: g * (1.0 - out**2),))


def sum_all(x):
    xv = value(x)
    return _wrap(np.asarray(xv.sum()), (x,), (lambda g: np.broadcast_to(g, xv.shape).copy(),))


def mean_all(x):
    xv = value(x)
    n = xv.size
    return _wrap(np.asarray(xv.mean()), (x,), (lambda g: np.full(xv.shape, g / n),))


def conv2d(x, k, stride=1, padding=0):
    """Batched direct convolution, ``x`` B x H x W x I, ``k`` K x K x I x O.

    ``y[b,h',w',o] = sum_{k1,k2,i} x[b, h'S + k1 - P, w'S + k2 - P, i] k[k1,k2,i,o]``
    with zeros outside the input.
    """
    xv, kv = value(x), value(k)
    if xv.ndim != 4 or kv.ndim != 4:
        raise ValueError("conv2d expects x of rank 4 (B,H,W,I) and k of rank 4 (K,K,I,O)")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be >= 1 and padding >= 0")
    B, H, W, I = xv.shape
    K1, K2, Ik, O = kv.shape
    if Ik != I:
        raise ValueError(f"kernel expects {Ik} input channels, input has {I}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if Hp < K1 or Wp < K2:
        raise ValueError("kernel larger than padded input")
    Ho = (Hp - K1) // stride + 1
    Wo = (Wp - K2) // stride + 1
    xp = np.pad(xv, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (K1, K2), axis=(1, 2))
    win = win[:, : (Ho - 1) * stride + 1 : stride, : (Wo - 1) * stride + 1 : stride]
    # win: B, Ho, Wo, I, K1, K2
    out = np.einsum("bhwikl,klio->bhwo", win, kv, optimize=True)
    _tally(2 * out.size * K1 * K2 * I)

    def vjp_x(g):
        gw = np.einsum("bhwo,klio->bhwikl", g, kv, optimize=True)
        gxp = np.zeros_like(xp)
        for a in range(K1):
            for c in range(K2):
                gxp[:, a : a + (Ho - 1) * stride + 1 : stride, c : c + (Wo - 1) * stride + 1 : stride, :] += gw[..., a, c]
        return gxp[:, padding : padding + H, padding : padding + W, :]

    def vjp_k(g):
        return np.einsum("bhwikl,bhwo->klio", win, g, optimize=True)

    return _wrap(out, (x, k), (vjp_x, vjp_k))


def vjp(fn, inputs, grad_output):
    """Gradients of ``<fn(*inputs), grad_output>`` with respect to every input.

    Returns ``(output, [grad_input_0, ...])`` as plain arrays.
    """
    leaves = [Var(np.array(value(x), copy=True)) for x in inputs]
    out = fn(*leaves)
    if not isinstance(out, Var):
        raise TypeError("function output does not depend on its inputs")
    g = np.asarray(grad_output, dtype=np.float64)
    if g.shape != out.shape:
        raise ValueError(f"grad_output shape {g.shape} does not match output {out.shape}")
    out.backward(g)
    grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves]
    return out.value, grads
