import numpy as np
import pytest

from stptensor import forms
from stptensor.accounting import param_count
from stptensor.forms import (
    build,
    core_layout,
    init_gaussian,
    load_weight,
    merge1,
    merge2,
    merge3,
    merge_chain,
    merge_pair,
    reconstruct,
    save_weight,
)
from stptensor.oracles import str_conv_reconstruct_loop, str_reconstruct_loop
from stptensor.plan import LayerPlan, PlanError
from stptensor.stp import SemiCore


def _plans(t):
    f = (lambda c: c) if t > 1 else (lambda c: {"str": "tr", "stt": "tt", "sttu": "tucker"}[c])
    return [
        LayerPlan(f("str"), (4, 3), (2, 4), rank=4, t=t),
        LayerPlan(f("str"), (4, 2), (6,), rank=4, t=t, kind="conv", kernel=3),
        LayerPlan(f("str"), (4, 6, 2), rank=4, t=t, kind="tensor"),
        LayerPlan(f("stt"), (3, 4), (10,), rank=4, t=t),
        LayerPlan(f("stt"), (3, 4), (4, 2), rank=4, t=t, kind="conv", kernel=3),
        LayerPlan(f("stt"), (4,), (6,), rank=4, t=t, kind="conv", kernel=1),
        LayerPlan(f("sttu"), (8,), (6,), rank=4, t=t, kind="conv", kernel=3),
        LayerPlan(f("sttu"), (8,), (6,), rank=4, t=t),
        LayerPlan(f("sttu"), (8, 6, 4), rank=(4, 2, 2), t=t, kind="tensor"),
    ]


@pytest.mark.parametrize("t", [1, 2])
def test_param_count_matches_materialized_weight(t):
    for plan in _plans(t):
        W = init_gaussian(plan, seed=0)
        assert W.num_params == param_count(plan), plan


def test_merge_pair_tr_slices():
    rng = np.random.default_rng(0)
    G1, G2 = rng.normal(size=(2, 3, 2)), rng.normal(size=(2, 4, 2))
    M = merge_pair(SemiCore(G1), SemiCore(G2)).tensor
    assert M.shape == (2, 3, 4, 2)
    for i in range(3):
        for j in range(4):
            np.testing.assert_allclose(M[:, i, j, :], G1[:, i, :] @ G2[:, j, :], rtol=1e-14)


def test_merge_with_identity_core():
    rng = np.random.default_rng(1)
    G = rng.normal(size=(2, 3, 2))
    ident = SemiCore(np.eye(2).reshape(2, 1, 2))
    M = merge_pair(SemiCore(G), ident).tensor
    np.testing.assert_array_equal(M.reshape(2, 3, 2), G)


def test_merge1_and_merge2_shapes():
    W = init_gaussian(LayerPlan("str", (4, 6, 8), (2,), rank=4, t=2), seed=0)
    assert merge1(W.cores[:3]).shape == (2, 2, 6, 8, 4)
    V = init_gaussian(LayerPlan("stt", (3, 4, 6), (10,), rank=4, t=2), seed=0)
    assert merge2(V.cores[:-1]).shape == (3, 4, 6, 4)


def test_merge3_shape():
    W = init_gaussian(LayerPlan("stt", (3, 4), (4, 2), rank=4, t=2, kind="conv", kernel=3), seed=0)
    M = merge3(W.cores)
    # R/t, I_1, I_2, O_1/t, O_2
    assert M.shape == (2, 3, 4, 2, 2)


def test_merge_strategies_t1_brute_force():
    rng = np.random.default_rng(2)
    Gs = [rng.normal(size=(3, d, 3)) for d in (2, 3, 2)]
    direct = np.einsum("aib,bjc,ckd->aijkd", *Gs)
    for strategy in ("sequential", "hierarchical"):
        np.testing.assert_allclose(merge_chain([SemiCore(G) for G in Gs], strategy).tensor, direct, rtol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_merge_strategies_agree_with_metadata(seed):
    W = init_gaussian(LayerPlan("str", (2, 4, 3, 4, 2, 6), rank=4, t=2, kind="tensor"), seed=seed)
    a = merge_chain(W.cores, "sequential")
    b = merge_chain(W.cores, "hierarchical")
    assert a.shape == b.shape and a.deficient == b.deficient
    np.testing.assert_allclose(a.tensor, b.tensor, rtol=1e-10, atol=1e-14)
    with pytest.raises(ValueError):
        merge_chain(W.cores, "random")


def test_tr_single_core_traces():
    G = np.random.default_rng(3).normal(size=(3, 5, 3))
    W = build(LayerPlan("tr", (5,), rank=3, kind="tensor"), [G])
    np.testing.assert_allclose(reconstruct(W), [np.trace(G[:, i, :]) for i in range(5)], rtol=1e-14)


def test_tr_ring_rotation():
    rng = np.random.default_rng(4)
    dims = (2, 3, 4)
    Gs = [rng.normal(size=(3, d, 3)) for d in dims]
    full = reconstruct(build(LayerPlan("tr", dims, rank=3, kind="tensor"), Gs))
    rot = reconstruct(build(LayerPlan("tr", dims[1:] + dims[:1], rank=3, kind="tensor"), Gs[1:] + Gs[:1]))
    np.testing.assert_allclose(rot, np.transpose(full, (1, 2, 0)), rtol=1e-10)


def test_sttu_identity_factors_leave_core():
    G = np.random.default_rng(5).normal(size=(3, 4))
    W = build(LayerPlan("tucker", (3, 4), rank=(3, 4), kind="tensor"), [G, np.eye(3), np.eye(4)])
    np.testing.assert_array_equal(reconstruct(W), G)


@pytest.mark.parametrize("seed", range(3))
def test_str_reconstruct_matches_loop_oracle(seed):
    W = init_gaussian(LayerPlan("str", (4, 4), (4,), rank=4, t=2), seed=seed)
    np.testing.assert_allclose(reconstruct(W), str_reconstruct_loop(W), rtol=1e-12, atol=1e-15)
    W = init_gaussian(LayerPlan("str", (3, 4), (4,), rank=4, t=2, kind="conv", kernel=2), seed=seed)
    np.testing.assert_allclose(reconstruct(W), str_conv_reconstruct_loop(W), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("plan", _plans(1), ids=lambda p: p.tag + p.kind)
def test_reconstruct_dims_t1(plan):
    full = reconstruct(init_gaussian(plan, seed=0))
    if plan.kind == "conv":
        lead = (plan.kernel, plan.kernel)
        expected = lead + ((plan.I, plan.O) if plan.family == "tucker" else plan.in_dims + plan.out_dims)
    elif plan.kind == "fc":
        expected = (plan.I, plan.O) if plan.family == "tucker" else (
            plan.in_dims + (plan.O,) if plan.family == "tt" else plan.in_dims + plan.out_dims)
    else:
        expected = plan.in_dims
    assert full.shape == expected


def test_str_schema_and_odd_modes():
    layout, kernel = core_layout(LayerPlan("str", (3, 4), (4,), rank=8, t=2, kind="conv", kernel=3))
    assert [s for s, _, _ in layout] == [(8, 3, 8), (4, 2, 8), (4, 2, 8)]
    assert kernel == (3, 3, 8, 8)
    padded = LayerPlan("str", (3, 4), (5,), rank=8, t=2, pad_odd=True)
    assert padded.in_dims == (4, 4) and padded.out_dims == (6,)


def test_plan_validation():
    with pytest.raises(PlanError):
        LayerPlan("str", (4,), (4,), rank=3, t=2)
    with pytest.raises(PlanError):
        LayerPlan("bogus", (4,), (4,))
    with pytest.raises(PlanError):
        LayerPlan("tt", (4, 4), (4,), rank=2, kind="conv")
    assert LayerPlan("tr", (4,), (4,), t=2).t == 1


def test_init_gaussian():
    plan = LayerPlan("str", (4, 4), (4, 4), rank=8, t=2)
    a, b = init_gaussian(plan, seed=3), init_gaussian(plan, seed=3)
    for x, y in zip(a.tensors(), b.tensors()):
        np.testing.assert_array_equal(x, y)
    # one-core chain reduces to the He scale
    assert forms.gaussian_std(2 / 16, 1.0, 1) == pytest.approx(np.sqrt(2 / 16))
    target = 2 / plan.fan_in
    var = np.mean([np.var(reconstruct(init_gaussian(plan, seed=s))) for s in range(10)])
    assert target / 3 < var < 3 * target


@pytest.mark.parametrize("suffix", ["", ".zip"])
def test_weight_archive_roundtrip(tmp_path, suffix):
    W = init_gaussian(LayerPlan("stt", (3, 4), (4, 2), rank=4, t=2, kind="conv", kernel=3), seed=1)
    path = tmp_path / f"w{suffix}"
    save_weight(W, path)
    V = load_weight(path)
    assert V.format == W.format and V.ratio == 2
    assert [c.deficient for c in V.cores] == [c.deficient for c in W.cores]
    np.testing.assert_array_equal(reconstruct(V), reconstruct(W))


def test_weight_archive_errors(tmp_path):
    with pytest.raises(forms.ManifestError):
        load_weight(tmp_path / "missing")
    d = tmp_path / "bad"
    d.mkdir()
    (d / "manifest.json").write_text("{}")
    with pytest.raises(forms.ManifestError):
        load_weight(d)
