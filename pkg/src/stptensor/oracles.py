"""Slow reference implementations used to cross-check the fast paths.

Nothing here shares code with :mod:`stptensor.stp` or
:mod:`stptensor.forms`; each oracle spells out its index arithmetic
with explicit loops or Kronecker products.
"""

from __future__ import annotations

import itertools

import numpy as np


def stp_kron(X, W):
    """Matrix STP via ``X (W ⊗ I_N)``."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    N = X.shape[1] // W.shape[0]
    return X @ np.kron(W, np.eye(N))


def semi_contract_loop(X, a, Y, b, y_deficient=None):
    """Entry-by-entry STP contraction of mode ``a`` of X with mode ``b`` of Y.

    The long index of X is ``p*t + s``; ``s`` becomes the minor part of the
    first deficient remaining mode of Y (first remaining mode if none).
    Modes are 1-based, as in :func:`stptensor.stp.semi_contract`.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    a0, b0 = a - 1, b - 1
    small = Y.shape[b0]
    t = X.shape[a0] // small
    flags = list(y_deficient) if y_deficient is not None else [False] * Y.ndim
    x_rest = [i for i in range(X.ndim) if i != a0]
    y_rest = [j for j in range(Y.ndim) if j != b0]
    tgt = next((k for k, j in enumerate(y_rest) if flags[j]), 0)
    y_shape = [Y.shape[j] for j in y_rest]
    if t > 1:
        y_shape[tgt] *= t
    out = np.zeros([X.shape[i] for i in x_rest] + y_shape)
    nx = len(x_rest)
    for idx in np.ndindex(*out.shape):
        xi, yi = list(idx[:nx]), list(idx[nx:])
        s = 0
        if t > 1:
            s = yi[tgt] % t
            yi[tgt] //= t
        acc = 0.0
        for p in range(small):
            xf = xi[:a0] + [p * t + s] + xi[a0:]
            yf = yi[:b0] + [p] + yi[b0:]
            acc += X[tuple(xf)] * Y[tuple(yf)]
        out[idx] = acc
    return out


def ring_loop(cores, t):
    """Dense tensor of a (semi-)tensor ring, one entry at a time.

    ``cores`` is a list of ``(tensor, deficient)`` pairs; each tensor is
    ``lead x m_1 x ... x m_k x trail``.  A deficient core stores its lead
    and first middle mode at ``1/t`` size; the residual of the previous
    core's trailing index then becomes the minor digit of that middle mode:
    ``trail_prev = lead * t + s`` and ``m_1 = m_1' * t + s``.
    The output modes are all middle modes in core order.
    """
    shapes = []
    for G, dfc in cores:
        mids = list(G.shape[1:-1])
        if dfc:
            mids[0] *= t
        shapes.append(mids)
    out_shape = [d for mids in shapes for d in mids]
    out = np.zeros(out_shape)
    n = len(cores)
    for idx in np.ndindex(*out_shape):
        pos, local = 0, []
        for mids in shapes:
            local.append(list(idx[pos : pos + len(mids)]))
            pos += len(mids)
        stored, resid = [], []
        for (G, dfc), li in zip(cores, local):
            li = list(li)
            s = 0
            if dfc:
                s = li[0] % t
                li[0] //= t
            stored.append(li)
            resid.append(s)
        acc = 0.0
        for leads in itertools.product(*[range(G.shape[0]) for G, _ in cores]):
            term = 1.0
            for k, (G, _) in enumerate(cores):
                nxt = (k + 1) % n
                lead_next = leads[nxt]
                trail = lead_next * t + resid[nxt] if cores[nxt][1] else lead_next
                term *= G[(leads[k], *stored[k], trail)]
                if term == 0.0:
                    break
            acc += term
        out[idx] = acc
    return out


def str_reconstruct_loop(W):
    """Dense ``I_1..I_N x O_1..O_M`` tensor of a TR/STR fully-connected weight."""
    cores = [(c.tensor, bool(c.deficient[0])) for c in W.cores]
    return ring_loop(cores, W.ratio)


def str_conv_reconstruct_loop(W):
    """Dense ``K x K x I.. x O..`` kernel of a TR/STR convolution weight."""
    N = len(W.input_dims)
    cores = [(c.tensor, bool(c.deficient[0])) for c in W.cores]
    C = np.asarray(W.conv_kernel)  # K, K, R, R
    Cr = C.transpose(2, 0, 1, 3)
    ring = ring_loop(cores[:N] + [(Cr, False)] + cores[N:], W.ratio)
    # ring modes: I.., K, K, O..
    M = len(W.cores) - N
    perm = [N, N + 1] + list(range(N)) + list(range(N + 2, N + 2 + M))
    return ring.transpose(perm)


def dense_conv_loop(X, K, stride=1, padding=0):
    """Direct convolution by explicit loops; X is H x W x I, K is k x k x I x O."""
    X = np.asarray(X, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    H, Wd, I = X.shape
    k1, k2, _, O = K.shape
    Ho = (H + 2 * padding - k1) // stride + 1
    Wo = (Wd + 2 * padding - k2) // stride + 1
    out = np.zeros((Ho, Wo, O))
    for h in range(Ho):
        for w in range(Wo):
            for a in range(k1):
                for c in range(k2):
                    hh, ww = h * stride + a - padding, w * stride + c - padding
                    if 0 <= hh < H and 0 <= ww < Wd:
                        out[h, w] += X[hh, ww] @ K[a, c]
    return out
