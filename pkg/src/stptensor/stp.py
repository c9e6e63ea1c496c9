"""Left semi-tensor product (STP) and its tensor generalizations.

For ``x`` of length ``N*P`` split into ``P`` consecutive blocks of length
``N`` and ``w`` of length ``P``::

    x ⋉ w = sum_p x[p*N:(p+1)*N] * w[p]

and for matrices ``X ⋉ W = X (W ⊗ I_N)``.  Throughout the package the long
index of an STP is read as ``p*t + s``: ``p`` is summed against the short
side and the residual ``s`` (size ``t``) survives as the fastest-varying
part of some output mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ad
from .tensor_core import ShapeError, fold, unfold

# Test hook: selfcheck flips this to prove the oracle suite catches a broken
# residual placement.  Never change it in library code.
RESIDUAL_MINOR = True


class StructureError(ShapeError):
    """An STP residual has no mode to merge into, or a chain is malformed."""


@dataclass(frozen=True)
class SemiCore:
    """A factor tensor with STP metadata.

    ``deficient[m]`` marks mode ``m`` as stored at ``1/ratio`` of its logical
    size.
    """

    tensor: object
    ratio: int = 1
    deficient: tuple = field(default=None)

    def __post_init__(self):
        flags = self.deficient
        if flags is None:
            flags = (False,) * self.tensor.ndim
        flags = tuple(bool(f) for f in flags)
        if len(flags) != self.tensor.ndim:
            raise ShapeError(f"{len(flags)} deficiency flags for an order-{self.tensor.ndim} tensor")
        if self.ratio < 1:
            raise ShapeError("ratio must be >= 1")
        if self.ratio == 1 and any(flags):
            raise ShapeError("ratio 1 cores cannot have deficient modes")
        object.__setattr__(self, "deficient", flags)

    @property
    def shape(self):
        return tuple(self.tensor.shape)

    @property
    def ndim(self):
        return self.tensor.ndim

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def logical_shape(self):
        return tuple(d * (self.ratio if f else 1) for d, f in zip(self.shape, self.deficient))


def as_core(X):
    return X if isinstance(X, SemiCore) else SemiCore(X)


# ---------------------------------------------------------------------------
# vector / matrix STP
# ---------------------------------------------------------------------------


def lstp_vec(x, w):
    """``x ⋉ w`` for a row vector ``x`` (length N*P) and ``w`` (length P)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size == 0 or x.size % w.size:
        raise ShapeError(f"length {x.size} is not a multiple of {w.size}")
    return x.reshape(w.size, -1).T @ w


def stp_mat(X, W):
    """Matrix STP ``X (M x N*P) ⋉ W (P x Q) -> M x N*Q``.

    Block ``(m, q)`` of the result occupies columns ``q*N .. q*N+N-1``.
    """
    if X.ndim != 2 or W.ndim != 2:
        raise ShapeError("stp_mat expects two matrices")
    M, NP = X.shape
    P, Q = W.shape
    if NP % P:
        raise ShapeError(f"{NP} columns are not a multiple of {P} rows")
    N = NP // P
    blocks = ad.reshape(X, (M, P, N))
    Y = ad.tensordot(blocks, W, ([1], [0]))  # M, N, Q
    Y = ad.transpose(Y, (0, 2, 1))
    return ad.reshape(Y, (M, Q * N))


# ---------------------------------------------------------------------------
# tensor STP
# ---------------------------------------------------------------------------


def semi_mode_n(G, A, n):
    """Left semi-tensor mode-``n`` product ``G ⋉_n A``.

    Unfolds ``G`` at mode ``n``, forms ``G_(n)^T ⋉ A`` and folds back, so
    mode ``n`` of size ``t*rows(A)`` becomes ``t*cols(A)``.
    """
    A = A.tensor if isinstance(A, SemiCore) else A
    if A.ndim != 2:
        raise ShapeError("semi_mode_n expects a factor matrix")
    size = G.shape[n - 1] if 1 <= n <= G.ndim else None
    if size is None:
        raise ShapeError(f"mode {n} out of range")
    if size % A.shape[0]:
        raise ShapeError(f"mode {n} has size {size}, not a multiple of {A.shape[0]}")
    t = size // A.shape[0]
    Xbar = stp_mat(ad.transpose(unfold(G, n), (1, 0)), A)
    dims = list(G.shape)
    dims[n - 1] = t * A.shape[1]
    return fold(ad.transpose(Xbar, (1, 0)), n, dims)


def _merge_residual(Z, res_axis, target_axis, t):
    """Fold the residual axis into ``target_axis`` (original index major)."""
    order = list(range(Z.ndim))
    order.remove(res_axis)
    pos = order.index(target_axis)
    if RESIDUAL_MINOR:
        order.insert(pos + 1, res_axis)
    else:
        order.insert(pos, res_axis)
    Z = ad.transpose(Z, order)
    shape = list(Z.shape)
    shape[pos : pos + 2] = [shape[pos] * shape[pos + 1]]
    return ad.reshape(Z, tuple(shape))


def _pick_target(flags):
    for i, f in enumerate(flags):
        if f:
            return i
    return 0 if flags else None


def semi_contract(X, a, Y, b, extra=()):
    """STP contraction of mode ``a`` of ``X`` with mode ``b`` of ``Y``.

    Requires ``shape(X)[a] == t * shape(Y)[b]``.  The size-``t`` residual is
    merged as the minor index into the first remaining deficient mode of
    ``Y`` (or its first remaining mode if none is deficient) and that mode's
    flag is cleared.  ``extra`` lists further ``(mode_x, mode_y)`` pairs of
    equal size that are contracted plainly in the same step.  Result modes
    are the remaining modes of ``X`` followed by those of ``Y``.
    """
    X, Y = as_core(X), as_core(Y)
    xs, ys = X.shape, Y.shape
    a0, b0 = a - 1, b - 1
    if not (0 <= a0 < len(xs) and 0 <= b0 < len(ys)):
        raise ShapeError("contraction mode out of range")
    big, small = xs[a0], ys[b0]
    if big % small:
        raise ShapeError(f"mode sizes {big} and {small} are not STP compatible")
    t = big // small
    pairs = [(p - 1, q - 1) for p, q in extra]
    for p, q in pairs:
        if xs[p] != ys[q]:
            raise ShapeError(f"extra pair sizes differ: {xs[p]} vs {ys[q]}")

    x = ad.reshape(X.tensor, xs[:a0] + (small, t) + xs[a0 + 1 :])
    shift = lambda i: i + 1 if i > a0 else i  # noqa: E731
    xa = [a0] + [shift(p) for p, _ in pairs]
    ya = [b0] + [q for _, q in pairs]
    Z = ad.tensordot(x, Y.tensor, (xa, ya))

    x_rest = [i for i in range(len(xs) + 1) if i not in xa]
    y_rest = [i for i in range(len(ys)) if i not in ya]
    res_axis = x_rest.index(a0 + 1)
    x_flags = [X.deficient[i if i <= a0 else i - 1] for i in x_rest if i != a0 + 1]
    y_flags = [Y.deficient[i] for i in y_rest]

    if t == 1:
        Z = ad.reshape(Z, tuple(s for i, s in enumerate(Z.shape) if i != res_axis))
    else:
        tgt = _pick_target(y_flags)
        if tgt is None:
            raise StructureError("STP residual has no remaining mode of the second operand to merge into")
        target_axis = len(x_rest) + tgt
        Z = _merge_residual(Z, res_axis, target_axis, t)
        y_flags[tgt] = False

    return SemiCore(Z, max(X.ratio, Y.ratio), tuple(x_flags + y_flags))


def semi_trace(X, a, b):
    """Close two modes of one tensor: ``shape[a] == t * shape[b]``.

    The plain trace when ``t == 1``; otherwise the residual merges into the
    first remaining deficient mode (or the first remaining mode).
    """
    X = as_core(X)
    xs = X.shape
    a0, b0 = a - 1, b - 1
    if a0 == b0 or not (0 <= a0 < len(xs) and 0 <= b0 < len(xs)):
        raise ShapeError("bad trace modes")
    big, small = xs[a0], xs[b0]
    if big % small:
        raise ShapeError(f"mode sizes {big} and {small} are not STP compatible")
    t = big // small
    x = ad.reshape(X.tensor, xs[:a0] + (small, t) + xs[a0 + 1 :])
    b1 = b0 + 1 if b0 > a0 else b0
    Z = ad.tensordot(x, np.eye(small), ([a0, b1], [0, 1]))
    rest = [i for i in range(len(xs) + 1) if i not in (a0, b1)]
    res_axis = rest.index(a0 + 1)
    flags = [X.deficient[i if i <= a0 else i - 1] for i in rest if i != a0 + 1]
    if t == 1:
        Z = ad.reshape(Z, tuple(s for i, s in enumerate(Z.shape) if i != res_axis))
    else:
        tgt = _pick_target(flags)
        if tgt is None:
            raise StructureError("STP residual has no remaining mode to merge into")
        # axes of Z other than the residual, in order
        others = [i for i in range(Z.ndim) if i != res_axis]
        Z = _merge_residual(Z, res_axis, others[tgt], t)
        flags[tgt] = False
    return SemiCore(Z, X.ratio, tuple(flags))


def permute(X, perm):
    """Reorder the modes of a SemiCore (1-based permutation)."""
    X = as_core(X)
    p = [i - 1 for i in perm]
    return SemiCore(ad.transpose(X.tensor, p), X.ratio, tuple(X.deficient[i] for i in p))
