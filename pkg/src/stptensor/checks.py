"""Randomized equivalence checks shared by ``stpt selfcheck`` and the tests.

Each check returns ``(max_relative_error, cases)``.  Instances are drawn
from a seeded generator, so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from . import autograd as ad
from . import forms, layers, oracles, stp
from .plan import LayerPlan
from .tensor_core import conv2d


def rel_err(a, b):
    a, b = np.asarray(ad.value(a)), np.asarray(ad.value(b))
    if a.shape != b.shape:
        return np.inf
    scale = max(np.abs(b).max(initial=0.0), 1e-300)
    return float(np.abs(a - b).max(initial=0.0) / scale)


# ---------------------------------------------------------------------------
# layer families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Family:
    name: str
    format: str  # STP format; its classical twin is used for t = 1 checks
    kind: str
    forward: object


FAMILIES = (
    Family("STR-FCL", "str", "fc", layers.str_fcl_forward),
    Family("STR-ConvL", "str", "conv", layers.str_conv_forward),
    Family("STT-FCL", "stt", "fc", layers.stt_fcl_forward),
    Family("STT-ConvL", "stt", "conv", layers.stt_conv_forward),
    Family("STTu-FCL", "sttu", "fc", layers.sttu_fcl_forward),
    Family("STTu-ConvL", "sttu", "conv", layers.sttu_conv_forward),
)
CLASSICAL = {"str": "tr", "stt": "tt", "sttu": "tucker"}


def random_plan(family: Family, rng, t=2, max_rank=8, max_dim=8, classical=False):
    """A small random plan whose STP links are all well defined at ratio ``t``."""
    R = int(rng.choice([r for r in range(t, max_rank + 1, t)]))
    even = [d for d in range(t, max_dim + 1, t)]
    anyd = list(range(1, max_dim + 1))
    pick = lambda pool, k: tuple(int(x) for x in rng.choice(pool, size=k))  # noqa: E731
    fmt = CLASSICAL[family.format] if classical else family.format
    conv = {}
    if family.kind == "conv":
        conv = dict(kernel=int(rng.choice([1, 3])), height=5, width=4,
                    stride=int(rng.choice([1, 2])), padding=1)
    if family.format == "str":
        # mixes divisible and non-divisible modes; the first input mode is divisible
        N, M = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        ins = (int(rng.choice(even)),) + pick(anyd[:4], N - 1)
        outs = pick(even, 1) + pick(anyd[:4], M - 1)
    elif family.format == "stt" and family.kind == "fc":
        ins = pick(anyd[:5], int(rng.integers(1, 3))) + pick(even, 1)
        outs = pick(even, 1)
    elif family.format == "stt":
        N = int(rng.integers(1, 3))
        ins = (int(rng.choice(anyd[:4])),) + pick(even, N - 1)
        outs = pick(even, 1) + pick(anyd[:4], N - 1)
    else:
        ins, outs = pick(even, 1), pick(even, 1)
    return LayerPlan(fmt, ins, outs, rank=R, t=1 if classical else t, kind=family.kind, **conv)


def random_input(plan, rng, batch=2):
    if plan.kind == "conv":
        return rng.normal(size=(batch, plan.height, plan.width) + tuple(plan.in_dims))
    if plan.family == "tucker":
        return rng.normal(size=(batch, plan.I))
    return rng.normal(size=(batch,) + tuple(plan.in_dims))


def _conv_kw(plan):
    return {"stride": plan.stride, "padding": plan.padding} if plan.kind == "conv" else {}


def reference_forward(W, plan, X, strategy="hierarchical"):
    """Reconstruct the dense weight, then apply a plain dense layer."""
    B = X.shape[0]
    if plan.kind == "conv":
        K = forms.kernel_matrix(W, strategy)
        x = np.reshape(X, X.shape[:3] + (prod(plan.in_dims),))
        Y = conv2d(x, K, stride=plan.stride, padding=plan.padding)
        Y = ad.value(Y)
        if W.format in ("Tucker", "STTu"):
            return Y
        return Y.reshape(Y.shape[:3] + tuple(plan.out_dims))
    Wr = ad.value(forms.regression_weight(W, strategy))
    if W.format in ("Tucker", "STTu"):
        return np.reshape(X, (B, -1)) @ Wr.reshape(Wr.shape[0], -1).T
    Y = ad.value(layers.tensor_regression_forward(X, Wr))
    if W.format in ("TTvec", "STTvec"):
        return Y.reshape(B, -1)
    return Y


def layer_vs_reconstruction(family: Family, seed, t=2, **kw):
    rng = np.random.default_rng(seed)
    plan = random_plan(family, rng, t=t, **kw)
    W = forms.init_gaussian(plan, seed=seed)
    X = random_input(plan, rng)
    out = ad.value(family.forward(X, W, **_conv_kw(plan)))
    return rel_err(out, reference_forward(W, plan, X))


def collapse_at_t1(family: Family, seed, **kw):
    """At ``t = 1`` the STP layer equals its classical twin and the oracle."""
    rng = np.random.default_rng(seed)
    plan = random_plan(family, rng, t=1, **kw)
    twin = plan.with_(format=CLASSICAL[family.format])
    W = forms.init_gaussian(plan, seed=seed)
    Wc = forms.build(twin, W.tensors())
    X = random_input(plan, rng)
    a = ad.value(family.forward(X, W, **_conv_kw(plan)))
    b = ad.value(family.forward(X, Wc, **_conv_kw(plan)))
    return max(rel_err(a, b), rel_err(b, reference_forward(Wc, twin, X)))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def stp_vs_kron(n_pairs=1000, seed=0, max_dim=16):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        M, P, N, Q = (int(v) for v in rng.integers(1, max_dim + 1, size=4))
        while N * P > max_dim * max_dim:
            N = max(1, N // 2)
        X = rng.normal(size=(M, N * P))
        W = rng.normal(size=(P, Q))
        worst = max(worst, rel_err(stp.stp_mat(X, W), oracles.stp_kron(X, W)))
    return worst, n_pairs


def residual_rule(seeds=range(5)):
    """Fast contractions against the entry-wise loop oracles."""
    worst, cases = 0.0, 0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        t = 2
        small = int(rng.integers(1, 4))
        X = rng.normal(size=(int(rng.integers(1, 4)), small * t, int(rng.integers(1, 3))))
        Y = rng.normal(size=(small, int(rng.integers(1, 4)), int(rng.integers(1, 4))))
        flags = (False, bool(rng.integers(0, 2)), False)
        ratio = 2 if any(flags) else 1
        fast = stp.semi_contract(X, 2, stp.SemiCore(Y, ratio, flags), 1).tensor
        worst = max(worst, rel_err(fast, oracles.semi_contract_loop(X, 2, Y, 1, flags)))
        for kind in ("fc", "conv"):
            plan = LayerPlan("str", (4, int(rng.choice([2, 3]))), (2,), rank=4, t=2, kind=kind, kernel=2)
            W = forms.init_gaussian(plan, seed=seed)
            ref = oracles.str_conv_reconstruct_loop(W) if kind == "conv" else oracles.str_reconstruct_loop(W)
            worst = max(worst, rel_err(forms.reconstruct(W), ref))
        cases += 3
    return worst, cases


def merge_agreement(seeds=range(20), length=6):
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in rng.choice([2, 3, 4], size=length))
        plan = LayerPlan("str", dims, rank=4, t=2, kind="tensor")
        W = forms.init_gaussian(plan, seed=seed)
        a = forms.merge_chain(W.cores, "sequential").tensor
        b = forms.merge_chain(W.cores, "hierarchical").tensor
        worst = max(worst, rel_err(a, b))
    return worst, len(seeds)


def suite(name, fn, tol):
    err, cases = fn()
    return {"suite": name, "cases": cases, "max_err": err, "tol": tol, "passed": bool(err <= tol)}


def family_suite(check, seeds, **kw):
    def run():
        worst = 0.0
        for fam in FAMILIES:
            for s in seeds:
                worst = max(worst, check(fam, s, **kw))
        return worst, len(FAMILIES) * len(seeds)

    return run
