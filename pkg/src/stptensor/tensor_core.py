"""Dense N-way tensors and the classical multilinear operations.

Tensors are ``numpy.ndarray`` of float64 in C (row-major) order, so the last
mode varies fastest.  All public mode indices are 1-based.  Functions accept
either arrays or :class:`stptensor.autograd.Var` and stay differentiable.
"""

from __future__ import annotations

from math import prod

import numpy as np

from . import autograd as ad


class ShapeError(ValueError):
    """Raised when operand dimensions are incompatible."""


def as_tensor(data, dims=None):
    """Build a float64 tensor, optionally from a flat row-major sequence."""
    arr = np.asarray(data, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 1 for d in dims):
            raise ShapeError(f"dims must be non-empty and positive, got {dims}")
        if arr.size != prod(dims):
            raise ShapeError(f"{arr.size} values cannot fill dims {dims}")
        arr = arr.reshape(dims)
    return arr


def _mode(n, order):
    if not 1 <= n <= order:
        raise ShapeError(f"mode {n} out of range for an order-{order} tensor")
    return n - 1


def unfold(T, n):
    """Mode-``n`` matricization, I_n x (product of the other dims).

    Columns enumerate the remaining modes in their original order, last
    fastest.
    """
    k = _mode(n, T.ndim)
    rest = [i for i in range(T.ndim) if i != k]
    moved = ad.transpose(T, [k] + rest)
    return ad.reshape(moved, (T.shape[k], -1))


def fold(M, n, dims):
    """Inverse of :func:`unfold` for the target ``dims``."""
    dims = tuple(int(d) for d in dims)
    k = _mode(n, len(dims))
    if M.ndim != 2:
        raise ShapeError("fold expects a matrix")
    rest = dims[:k] + dims[k + 1 :]
    if M.shape[0] != dims[k] or M.size != prod(dims):
        raise ShapeError(f"matrix of shape {M.shape} cannot fold into {dims} at mode {n}")
    T = ad.reshape(M, (dims[k],) + rest)
    perm = list(range(1, k + 1)) + [0] + list(range(k + 1, len(dims)))
    return ad.transpose(T, perm)


def contract(X, Y, N):
    """Contract the last ``N`` modes of ``X`` with the first ``N`` of ``Y``."""
    if N < 0 or N > X.ndim or N > Y.ndim:
        raise ShapeError(f"cannot contract {N} modes")
    if tuple(X.shape[X.ndim - N :]) != tuple(Y.shape[:N]):
        raise ShapeError(f"shared modes differ: {X.shape[X.ndim - N:]} vs {Y.shape[:N]}")
    return ad.tensordot(X, Y, (list(range(X.ndim - N, X.ndim)), list(range(N))))


def trace_modes(T, a, b):
    """Sum over the diagonal of modes ``a`` and ``b`` (1-based, equal sizes)."""
    i, j = a - 1, b - 1
    if T.shape[i] != T.shape[j]:
        raise ShapeError(f"cannot trace modes of sizes {T.shape[i]} and {T.shape[j]}")
    eye = np.eye(T.shape[i])
    return ad.tensordot(T, eye, ([i, j], [0, 1]))


def self_contract(X, N):
    """Generalized trace of an order ``2N+2`` tensor (I, J1, J1, ..., JN, JN, K)."""
    if X.ndim != 2 * N + 2:
        raise ShapeError(f"self_contract with N={N} needs order {2 * N + 2}, got {X.ndim}")
    Z = X
    for _ in range(N):
        # the next pair always sits at modes 2 and 3 after the previous trace
        Z = trace_modes(Z, 2, 3)
    return Z


def mode_n_product(T, A, n):
    """``T x_n A``: replace mode ``n`` (size ``cols(A)``) by ``rows(A)``."""
    k = _mode(n, T.ndim)
    if A.ndim != 2 or A.shape[1] != T.shape[k]:
        raise ShapeError(f"matrix {A.shape} cannot multiply mode {n} of size {T.shape[k]}")
    dims = list(T.shape)
    dims[k] = A.shape[0]
    return fold(ad.tensordot(A, unfold(T, n), ([1], [0])), n, dims)


def conv_output_size(size, kernel, stride=1, padding=0):
    return (size + 2 * padding - kernel) // stride + 1


def conv2d(X, K, stride=1, padding=0):
    """Direct 2-D convolution, X H x W x I (optionally batched), K K x K x I x O."""
    batched = X.ndim == 4
    if not batched:
        if X.ndim != 3:
            raise ShapeError("conv2d input must be H x W x I or B x H x W x I")
        X = ad.reshape(X, (1,) + tuple(X.shape))
    try:
        Y = ad.conv2d(X, K, stride=stride, padding=padding)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return Y if batched else ad.reshape(Y, tuple(Y.shape[1:]))
