"""Forward passes of dense, STP-dense and factorized layers.

Every input carries a leading batch mode.  The factorized layers follow the
step order of the standard layer cost tables (merge the core chains first, then
contract with the data) rather than a cost-optimal contraction plan.
Because all arithmetic goes through :mod:`stptensor.autograd`, passing
:class:`~stptensor.autograd.Var` inputs or weights yields exact gradients;
:func:`backward` wraps that.
"""

from __future__ import annotations

from math import prod

from . import autograd as ad
from .forms import FactorizedWeight, merge1, merge2, merge3
from .stp import ShapeError, semi_contract, semi_mode_n, semi_trace, stp_mat
from .tensor_core import conv2d


def _bias(Y, b):
    return Y if b is None else ad.add(Y, b)


def _check(W, formats):
    if not isinstance(W, FactorizedWeight) or W.format not in formats:
        got = getattr(W, "format", type(W).__name__)
        raise ShapeError(f"expected a weight in {formats}, got {got}")


def dense_forward(x, W, b=None):
    """``y = W x + b`` with ``W`` of shape O x I; ``x`` is I or B x I."""
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"input size {x.shape[-1]} does not match weight {W.shape}")
    return _bias(ad.tensordot(x, W, ([x.ndim - 1], [1])), b)


def stp_dense_forward(X, W, b=None):
    """``Y = X ⋉ W + b`` for X of shape B x (n*p) and W of shape p x q."""
    return _bias(stp_mat(X, W), b)


def tensor_regression_forward(X, W, B=None):
    """``Y = <W, X>_N + B``; W is O_1..O_M x I_1..I_N, X is batch x I_1..I_N."""
    n = X.ndim - 1
    if tuple(W.shape[W.ndim - n :]) != tuple(X.shape[1:]):
        raise ShapeError(f"input modes {X.shape[1:]} do not match weight {W.shape}")
    m = W.ndim - n
    return _bias(ad.tensordot(X, W, (list(range(1, n + 1)), list(range(m, W.ndim)))), B)


def str_fcl_forward(X, W, bias=None, strategy="hierarchical", return_steps=False):
    """Tensor-ring / semi-tensor-ring fully-connected layer."""
    _check(W, ("TR", "STR"))
    N = len(W.input_dims)
    if tuple(X.shape[1:]) != tuple(W.input_dims):
        raise ShapeError(f"input modes {X.shape[1:]} != {W.input_dims}")
    g_in = merge1(W.cores[:N], strategy)
    g_out = merge1(W.cores[N:], strategy)
    # step 2: X's I_1 against the merged core's I_1/t, then the other inputs
    Y = semi_contract(X, 2, g_in, 2, extra=[(2 + k, 2 + k) for k in range(1, N)])
    step2 = Y.tensor
    # step 3: STP with the output chain, then close the ring
    Y = semi_contract(Y, 3, g_out, 1)
    Y = semi_trace(Y, Y.ndim, 2).tensor
    out = _bias(Y, bias)
    if return_steps:
        return out, {"g_in": g_in, "g_out": g_out, "step2": step2}
    return out


def stt_fcl_forward(X, W, bias=None, strategy="hierarchical", return_steps=False):
    """TT-vector / semi-tensor-train-vector fully-connected layer, output length O."""
    _check(W, ("TTvec", "STTvec"))
    N = len(W.input_dims)
    if tuple(X.shape[1:]) != tuple(W.input_dims):
        raise ShapeError(f"input modes {X.shape[1:]} != {W.input_dims}")
    U = merge2(W.cores[:-1], strategy)
    y = ad.tensordot(X, U.tensor, (list(range(1, N + 1)), list(range(N))))
    out = semi_contract(y, 2, W.cores[-1], 1).tensor
    out = _bias(out, bias)
    if return_steps:
        return out, {"U_in": U, "step2": y}
    return out


def _per_slice_conv(Y, C, stride, padding):
    """Convolve ``Y`` (B,H,W,S,Cin) independently for every slice index S."""
    B, H, Wd, S, Cin = Y.shape
    Z = ad.reshape(ad.transpose(Y, (0, 3, 1, 2, 4)), (B * S, H, Wd, Cin))
    Z = conv2d(Z, C, stride=stride, padding=padding)
    _, Ho, Wo, Cout = Z.shape
    return ad.transpose(ad.reshape(Z, (B, S, Ho, Wo, Cout)), (0, 2, 3, 1, 4))


def str_conv_forward(X, W, stride=1, padding=0, bias=None, strategy="hierarchical", return_steps=False):
    """TR / STR convolution; X is B x H x W x I_1..I_N."""
    _check(W, ("TR", "STR"))
    if W.conv_kernel is None:
        raise ShapeError("STR conv weight needs a kernel C")
    N = len(W.input_dims)
    if tuple(X.shape[3:]) != tuple(W.input_dims):
        raise ShapeError(f"input channel modes {X.shape[3:]} != {W.input_dims}")
    g_in = merge1(W.cores[:N], strategy)
    g_out = merge1(W.cores[N:], strategy)
    Y1 = semi_contract(X, 4, g_in, 2, extra=[(4 + k, 2 + k) for k in range(1, N)]).tensor
    Y2 = _per_slice_conv(Y1, W.conv_kernel, stride, padding)
    Y = semi_contract(Y2, 5, g_out, 1)
    Y = semi_trace(Y, Y.ndim, 4).tensor
    out = _bias(Y, bias)
    if return_steps:
        return out, {"g_in": g_in, "g_out": g_out, "step2": Y1, "step3": Y2}
    return out


def stt_conv_forward(X, W, stride=1, padding=0, bias=None, strategy="hierarchical", return_steps=False):
    """TT-matrix / STT-matrix convolution.

    X is B x H x W x 1 x I_1..I_N; the singleton channel may be omitted.
    """
    _check(W, ("TTmat", "STTmat"))
    N = len(W.input_dims)
    if X.ndim == 3 + N + 1 and X.shape[3] == 1:
        X = ad.reshape(X, tuple(X.shape[:3]) + tuple(X.shape[4:]))
    if tuple(X.shape[3:]) != tuple(W.input_dims):
        raise ShapeError(f"input channel modes {X.shape[3:]} != {W.input_dims}")
    V = merge3(W.cores, strategy)
    B, H, Wd = X.shape[:3]
    I = prod(W.input_dims)
    Z = ad.transpose(X, [0] + list(range(3, 3 + N)) + [1, 2])
    Z = conv2d(ad.reshape(Z, (B * I, H, Wd, 1)), W.conv_kernel, stride=stride, padding=padding)
    _, Ho, Wo, R = Z.shape
    Z = ad.reshape(Z, (B,) + tuple(W.input_dims) + (Ho, Wo, R))
    Y1 = ad.transpose(Z, [0, N + 1, N + 2, N + 3] + list(range(1, N + 1)))
    Y = semi_contract(Y1, 4, V, 1, extra=[(4 + n, 1 + n) for n in range(1, N + 1)]).tensor
    out = _bias(Y, bias)
    if return_steps:
        return out, {"V": V, "step1": Y1}
    return out


def sttu_fcl_forward(X, W, bias=None, return_steps=False):
    """Tucker-2 / STTu fully-connected layer; X is B x I."""
    _check(W, ("Tucker", "STTu"))
    if W.kind != "fc" or len(W.cores) != 3:
        raise ShapeError("STTu fc weight needs a core matrix and in/out factors")
    G, A_in, A_out = W.cores
    X = ad.reshape(X, (X.shape[0], prod(X.shape[1:])))
    Y1 = semi_mode_n(X, ad.transpose(A_in.tensor, (1, 0)), 2)
    Y2 = ad.tensordot(Y1, G.tensor, ([1], [0]))
    Y = semi_mode_n(Y2, A_out.tensor, 2)
    out = _bias(Y, bias)
    if return_steps:
        return out, {"step1": Y1, "step2": Y2}
    return out


def sttu_conv_forward(X, W, stride=1, padding=0, bias=None, return_steps=False):
    """Tucker-2 / STTu convolution; X is B x H x W x I."""
    _check(W, ("Tucker", "STTu"))
    if W.conv_kernel is None or len(W.cores) != 2:
        raise ShapeError("STTu conv weight needs in/out factors and a core kernel")
    A_in, A_out = W.cores
    Y1 = semi_mode_n(X, ad.transpose(A_in.tensor, (1, 0)), 4)
    Y2 = conv2d(Y1, W.conv_kernel, stride=stride, padding=padding)
    Y = semi_mode_n(Y2, A_out.tensor, 4)
    out = _bias(Y, bias)
    if return_steps:
        return out, {"step1": Y1, "step2": Y2}
    return out


def backward(fn, inputs, grad_output):
    """Exact gradients of ``fn`` at ``inputs`` for the cotangent ``grad_output``.

    Returns ``(output, grads)`` with one gradient per input.
    """
    return ad.vjp(fn, inputs, grad_output)


def layer_backward(forward, X, W: FactorizedWeight, grad_output, **kw):
    """Gradients of a factorized layer w.r.t. its input and every stored tensor."""
    tensors = W.tensors()

    def fn(x, *ts):
        return forward(x, W.with_tensors(ts), **kw)

    out, grads = ad.vjp(fn, [X] + tensors, grad_output)
    return out, grads[0], grads[1:]
