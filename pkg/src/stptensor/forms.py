"""Factorized weight containers, chain merging and reconstruction.

Storage schemas (``t`` the STP ratio, ``R`` the rank).  A factor mode whose
size is not divisible by ``t`` is stored full and every rank edge feeding it
becomes an ordinary contraction.

* ``TR``/``STR``: one core ``R/t x I_n/t x R`` per input and output factor,
  closed into a ring; conv layers add a kernel ``C`` of ``K x K x R x R``
  between the input and output chains.
* ``TTvec``/``STTvec``: ``1 x I_1 x R``, then ``R/t x I_n/t x R``, then a
  factor matrix ``R/t x O/t``.
* ``TTmat``/``STTmat`` (conv): ``I_1 x O_1/t x R``, middle cores
  ``R/t x I_n/t x O_n x R``, last ``R/t x I_N/t x O_N x R/t`` and a kernel
  ``C`` of ``K x K x 1 x R``.
* ``Tucker``/``STTu``: a full core plus factor matrices ``R_n/t x I_n/t``;
  conv layers factor only the two channel modes (Tucker-2).
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from dataclasses import dataclass
from math import prod

import numpy as np

from . import autograd as ad
from . import tensorio
from .plan import LayerPlan, PlanError
from .stp import SemiCore, ShapeError, StructureError, permute, semi_contract, semi_mode_n, semi_trace

FORMATS = ("Tucker", "STTu", "TTvec", "STTvec", "TTmat", "STTmat", "TR", "STR")


@dataclass(frozen=True)
class FactorizedWeight:
    format: str
    cores: tuple
    ratio: int
    rank: object
    input_dims: tuple
    output_dims: tuple = ()
    conv_kernel: object = None
    kind: str = "fc"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ShapeError(f"unknown format {self.format!r}")
        object.__setattr__(self, "cores", tuple(self.cores))

    @property
    def num_params(self):
        n = sum(c.size for c in self.cores)
        if self.conv_kernel is not None:
            n += int(np.prod(self.conv_kernel.shape))
        return n

    @property
    def kernel_size(self):
        return None if self.conv_kernel is None else self.conv_kernel.shape[0]

    def tensors(self):
        """All stored parameter tensors (cores first, kernel last)."""
        out = [c.tensor for c in self.cores]
        if self.conv_kernel is not None:
            out.append(self.conv_kernel)
        return out

    def with_tensors(self, tensors):
        """Same structure, new parameter tensors (e.g. autograd Vars)."""
        tensors = list(tensors)
        cores = tuple(SemiCore(t, c.ratio, c.deficient) for c, t in zip(self.cores, tensors))
        kernel = tensors[len(cores)] if self.conv_kernel is not None else None
        return FactorizedWeight(
            self.format, cores, self.ratio, self.rank, self.input_dims,
            self.output_dims, kernel, self.kind,
        )


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------


def _core(shape, flags, t):
    return tuple(int(s) for s in shape), tuple(flags), (t if any(flags) else 1)


def core_layout(plan: LayerPlan):
    """Shapes, deficiency flags and ratios of every core, plus the kernel shape."""
    if plan.rank is None:
        raise PlanError("a numeric rank is needed to build cores")
    t = plan.t
    div = (lambda d: t > 1 and d % t == 0)  # noqa: E731
    tag = plan.tag
    I, O = plan.in_dims, plan.out_dims
    cores, kernel = [], None

    if plan.family == "tr":
        R = plan.ranks[0]
        for d in I + O:
            if div(d):
                cores.append(_core((R // t, d // t, R), (True, True, False), t))
            else:
                cores.append(_core((R, d, R), (False,) * 3, 1))
        if plan.kind == "conv":
            kernel = (plan.kernel, plan.kernel, R, R)

    elif tag.endswith("vec"):
        R = plan.ranks[0]
        cores.append(_core((1, I[0], R), (False,) * 3, 1))
        for d in I[1:]:
            if div(d):
                cores.append(_core((R // t, d // t, R), (True, True, False), t))
            else:
                cores.append(_core((R, d, R), (False,) * 3, 1))
        o = plan.O
        if div(o):
            cores.append(_core((R // t, o // t), (True, True), t))
        else:
            cores.append(_core((R, o), (False, False), 1))

    elif tag.endswith("mat"):
        R = plan.ranks[0]
        N = len(I)
        head = div(O[0])  # the kernel link is an STP iff O_1 is stored deficient
        tail = R // t if head else R
        for n in range(N):
            lead = n > 0 and div(I[n])
            if n == 0:
                o = O[0] // t if head else O[0]
                shape = (I[0], o, tail if N == 1 else R)
                flags = (False, head, head and N == 1)
            else:
                shape = ((R // t) if lead else R, I[n] // t if lead else I[n], O[n], tail if n == N - 1 else R)
                flags = (lead, lead, False, head and n == N - 1)
            cores.append(_core(shape, flags, t))
        kernel = (plan.kernel, plan.kernel, 1, R)

    else:  # tucker
        if plan.kind == "tensor":
            dims = I
            ranks = plan.ranks if len(plan.ranks) == len(dims) else plan.ranks * len(dims)
            cores.append(_core(ranks, (False,) * len(ranks), 1))
        else:
            dims = (plan.I, plan.O)
            ranks = plan.ranks if len(plan.ranks) == 2 else plan.ranks * 2
            if plan.kind == "conv":
                kernel = (plan.kernel, plan.kernel) + tuple(ranks)
            else:
                cores.append(_core(ranks, (False, False), 1))
        for d, r in zip(dims, ranks):
            if div(d) and r % t == 0:
                cores.append(_core((r // t, d // t), (True, True), t))
            else:
                cores.append(_core((r, d), (False, False), 1))
    return cores, kernel


def build(plan: LayerPlan, tensors):
    """Assemble a FactorizedWeight from ``tensors`` laid out as core_layout(plan)."""
    layout, kshape = core_layout(plan)
    tensors = list(tensors)
    if len(tensors) != len(layout) + (kshape is not None):
        raise ShapeError("wrong number of tensors for this plan")
    cores = []
    for (shape, flags, ratio), T in zip(layout, tensors):
        if tuple(T.shape) != shape:
            raise ShapeError(f"core shape {tuple(T.shape)} != expected {shape}")
        cores.append(SemiCore(T, ratio, flags))
    kernel = None
    if kshape is not None:
        kernel = tensors[-1]
        if tuple(kernel.shape) != kshape:
            raise ShapeError(f"kernel shape {tuple(kernel.shape)} != expected {kshape}")
    return FactorizedWeight(
        plan.tag, cores, plan.t, plan.rank, plan.in_dims, plan.out_dims, kernel, plan.kind
    )


def plan_of(W: FactorizedWeight) -> LayerPlan:
    family = {"TR": "tr", "STR": "str", "Tucker": "tucker", "STTu": "sttu"}.get(W.format)
    if family is None:
        family = "stt" if W.format.startswith("STT") else "tt"
    return LayerPlan(
        family, W.input_dims, W.output_dims, W.rank, W.ratio, W.kind,
        kernel=W.kernel_size or 1,
    )


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------


def merge_pair(G1, G2):
    """STP-merge the last mode of ``G1`` with the first mode of ``G2``."""
    return semi_contract(G1, G1.ndim, G2, 1)


def merge_chain(cores, strategy="hierarchical"):
    """Merge a chain of cores left to right or as a balanced binary tree."""
    cores = list(cores)
    if not cores:
        raise StructureError("empty chain")
    if strategy == "sequential":
        out = cores[0]
        for c in cores[1:]:
            out = merge_pair(out, c)
        return out
    if strategy != "hierarchical":
        raise ValueError(f"unknown merge strategy {strategy!r}")

    def rec(lo, hi):
        if hi - lo == 1:
            return cores[lo]
        mid = (lo + hi) // 2
        return merge_pair(rec(lo, mid), rec(mid, hi))

    return rec(0, len(cores))


def merge1(cores, strategy="hierarchical"):
    """Ring-core merge: ``R/t x I_1/t x I_2 x ... x I_N x R``."""
    return merge_chain(cores, strategy)


def merge2(cores, strategy="hierarchical"):
    """TT-vector merge: ``I_1 x ... x I_N x R`` (leading unit rank dropped)."""
    M = merge_chain(cores, strategy)
    if M.shape[0] != 1:
        raise StructureError("TT-vector chains start with a unit rank")
    return SemiCore(ad.reshape(M.tensor, M.shape[1:]), M.ratio, M.deficient[1:])


def merge3(cores, strategy="hierarchical"):
    """TT-matrix merge, permuted to ``R/t x I_1 .. I_N x O_1/t .. O_N``."""
    M = merge_chain(cores, strategy)
    N = len(cores)
    # merged modes interleave (I_1, O_1, ..., I_N, O_N, R_last)
    perm = [2 * N + 1] + [2 * n + 1 for n in range(N)] + [2 * n + 2 for n in range(N)]
    return permute(M, perm)


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------


def _close_ring(M):
    return semi_trace(M, M.ndim, 1)


def reconstruct(W: FactorizedWeight, strategy="hierarchical"):
    """Materialize the full weight.

    fc layers give ``I_1..I_N x O_1..`` (TT-vector: ``I_1..I_N x O``);
    conv layers give ``K x K x I_1..I_N x O_1..``; plain tensors give their
    own dims.
    """
    fmt = W.format
    if fmt in ("TR", "STR"):
        N = len(W.input_dims)
        cores = list(W.cores)
        if W.conv_kernel is not None:
            C = ad.transpose(W.conv_kernel, (2, 0, 1, 3))
            cores = cores[:N] + [SemiCore(C)] + cores[N:]
        full = _close_ring(merge_chain(cores, strategy)).tensor
        if W.conv_kernel is not None:
            n_out = len(W.output_dims)
            perm = [N, N + 1] + list(range(N)) + list(range(N + 2, N + 2 + n_out))
            full = ad.transpose(full, perm)
        return full
    if fmt in ("TTvec", "STTvec"):
        U = merge2(W.cores[:-1], strategy)
        return semi_contract(U, U.ndim, W.cores[-1], 1).tensor
    if fmt in ("TTmat", "STTmat"):
        V = merge3(W.cores, strategy)
        C = ad.reshape(W.conv_kernel, W.conv_kernel.shape[:2] + (W.conv_kernel.shape[3],))
        C = ad.transpose(C, (2, 0, 1))
        return semi_contract(SemiCore(C), 1, V, 1).tensor
    # Tucker / STTu
    if W.conv_kernel is not None:
        G, modes = W.conv_kernel, (3, 4)
        factors = W.cores
    else:
        G, factors = W.cores[0].tensor, W.cores[1:]
        modes = tuple(range(1, len(factors) + 1))
    for A, n in zip(factors, modes):
        G = semi_mode_n(G, A, n)
    return G


def regression_weight(W: FactorizedWeight, strategy="hierarchical"):
    """Reconstructed fc weight arranged ``O... x I...`` for tensor regression."""
    full = reconstruct(W, strategy)
    if W.kind != "fc":
        raise ShapeError("regression_weight is for fully-connected weights")
    if W.format in ("Tucker", "STTu"):
        full = ad.reshape(full, tuple(W.input_dims) + tuple(W.output_dims))
    n_in = len(W.input_dims)
    return ad.transpose(full, list(range(n_in, full.ndim)) + list(range(n_in)))


def kernel_matrix(W: FactorizedWeight, strategy="hierarchical"):
    """Reconstructed conv kernel flattened to ``K x K x I x O``."""
    full = reconstruct(W, strategy)
    K = W.kernel_size
    return ad.reshape(full, (K, K, prod(W.input_dims), prod(W.output_dims)))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def gaussian_std(target_var, n_terms, n_factors):
    """Per-factor std so a sum of ``n_terms`` products of ``n_factors``
    independent zero-mean factors has variance ``target_var``."""
    return (target_var / n_terms) ** (1.0 / (2 * n_factors))


def init_gaussian(plan: LayerPlan, seed: int = 0):
    """i.i.d. Gaussian cores, scaled so the reconstruction has variance ~2/fan_in."""
    layout, kshape = core_layout(plan)
    shapes = [s for s, _, _ in layout] + ([kshape] if kshape else [])
    ones = build(plan, [np.ones(s) for s in shapes])
    n_terms = float(np.mean(reconstruct(ones)))
    target = 2.0 / plan.fan_in if plan.kind != "tensor" else 1.0
    std = gaussian_std(target, n_terms, len(shapes))
    rng = np.random.default_rng(seed)
    return build(plan, [rng.normal(0.0, std, size=s) for s in shapes])


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _manifest(W):
    return {
        "format": W.format,
        "kind": W.kind,
        "ratio": W.ratio,
        "rank": list(W.rank) if isinstance(W.rank, tuple) else W.rank,
        "input_dims": list(W.input_dims),
        "output_dims": list(W.output_dims),
        "cores": [
            {"file": f"core_{i}.stpt", "ratio": c.ratio, "deficient": list(c.deficient)}
            for i, c in enumerate(W.cores)
        ],
        "conv_kernel": None if W.conv_kernel is None else "kernel.stpt",
    }


def save_weight(W: FactorizedWeight, path):
    """Write a directory, or a zip archive if ``path`` ends with ``.zip``."""
    files = {"manifest.json": json.dumps(_manifest(W), indent=2).encode()}
    for i, c in enumerate(W.cores):
        files[f"core_{i}.stpt"] = tensorio.dumps(ad.value(c.tensor))
    if W.conv_kernel is not None:
        files["kernel.stpt"] = tensorio.dumps(ad.value(W.conv_kernel))
    path = os.fspath(path)
    if path.endswith(".zip"):
        with zipfile.ZipFile(path, "w") as zf:
            for name, data in files.items():
                zf.writestr(name, data)
    else:
        os.makedirs(path, exist_ok=True)
        for name, data in files.items():
            with open(os.path.join(path, name), "wb") as fh:
                fh.write(data)


class ManifestError(ValueError):
    pass


def load_weight(path):
    path = os.fspath(path)
    if os.path.isdir(path):
        def read(name):
            with open(os.path.join(path, name), "rb") as fh:
                return fh.read()
    elif zipfile.is_zipfile(path):
        zf = zipfile.ZipFile(path)
        read = zf.read
    else:
        raise ManifestError(f"{path} is neither a weight directory nor a zip archive")
    try:
        m = json.load(io.BytesIO(read("manifest.json")))
        cores = [
            SemiCore(tensorio.loads(read(c["file"])), int(c["ratio"]), tuple(c["deficient"]))
            for c in m["cores"]
        ]
        kernel = tensorio.loads(read(m["conv_kernel"])) if m.get("conv_kernel") else None
        rank = tuple(m["rank"]) if isinstance(m["rank"], list) else m["rank"]
        return FactorizedWeight(
            m["format"], cores, int(m["ratio"]), rank, tuple(m["input_dims"]),
            tuple(m["output_dims"]), kernel, m.get("kind", "fc"),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"malformed manifest: {exc}") from None
