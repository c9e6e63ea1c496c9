from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from stptensor import autograd as ad
from stptensor import forms, stp
from stptensor.accounting import (
    R_SYM,
    SYMBOLS,
    compression_factor,
    dense_param_count,
    flop_count,
    flop_formulas,
    format_expr,
    memory_ratio,
    param_count,
    param_expr,
    r2_coefficient,
    stp_dense_param_count,
)
from stptensor.networks import load_plan_file, report_for
from stptensor.plan import LayerPlan, PlanError

R = R_SYM


def conv(fmt, ins, outs, t):
    return LayerPlan(fmt, ins, outs, t=t, kind="conv", kernel=3)


def test_resnet_rows_by_hand():
    assert param_expr(conv("tr", (3,), (4, 2, 2), 1)) == 20 * R**2
    assert param_expr(conv("str", (3,), (4, 4), 2)) == 14 * R**2
    unit1 = param_expr(conv("str", (4, 4), (4, 4), 2)) * 2
    assert unit1 == 26 * R**2
    assert param_expr(LayerPlan("str", (4, 4, 4), (10,), t=2)) == sp.Rational(11, 2) * R**2


def test_t1_str_equals_tr():
    for ins, outs in [((4, 4), (4, 2)), ((3, 5), (7,))]:
        assert param_expr(LayerPlan("str", ins, outs, t=1)) == param_expr(LayerPlan("tr", ins, outs))


def test_tt_vector_table_formula():
    # R I_1 + (R O + sum_{n>=2} R^2 I_n) / t^2
    plan = LayerPlan("stt", (3, 4, 6), (10,), t=2)
    assert param_expr(plan) == 3 * R + (10 * R + 4 * R**2 + 6 * R**2) / 4


def test_numeric_param_count():
    assert param_count(LayerPlan("str", (4, 4), (4, 4), rank=8, t=2)) == 4 * 64 * 4 // 4
    assert dense_param_count(LayerPlan("tr", (4, 4), (4, 4), kind="conv", kernel=3)) == 9 * 256
    assert param_count(LayerPlan("str", (4,), (4,), t=2)) == 2 * R**2
    with pytest.raises(PlanError):
        LayerPlan("str", (4,), (4,), rank=3, t=2)


@pytest.mark.parametrize("n,p", [(2, 8), (4, 4)])
def test_stp_dense_sharing_law(n, p):
    dense = (n * p) * (n * p)
    assert Fraction(stp_dense_param_count(n, p, p), dense) == Fraction(1, n * n)


def test_flop_example_values():
    plan = LayerPlan("str", (16, 16), (16, 16), rank=8, t=2, batch=128)
    steps = dict(flop_count(plan).steps)
    assert steps["step2"] == 2_097_152
    tr = dict(flop_count(plan.with_(format="tr", t=1)).steps)
    assert tr["step2"] == 2 * steps["step2"]


def test_flop_tr_column():
    t, B, I, O = (SYMBOLS[k] for k in "tBIO")
    total = sum(e for _, e in flop_formulas("tr", "fc")).subs(t, 1)
    assert sp.simplify(total - (4 * R**3 + 2 * B * R**2) * (I + O)) == 0


@pytest.mark.parametrize("family,kind", [("tr", "fc"), ("tt", "fc"), ("tr", "conv"), ("tt", "conv"), ("tucker", "conv")])
def test_flop_stp_strictly_smaller(family, kind):
    rng = np.random.default_rng(0)
    for _ in range(20):
        vals = {SYMBOLS[k]: int(rng.integers(1, 50)) for k in ("B", "R", "I", "O", "H", "W", "Hp", "Wp", "K")}
        total = sum(e for _, e in flop_formulas(family, kind))
        assert total.subs({**vals, SYMBOLS["t"]: 2}) < total.subs({**vals, SYMBOLS["t"]: 1})


def test_measured_counter_matches_step2():
    plan = LayerPlan("str", (4, 4), (4, 4), rank=4, t=2, batch=3)
    W = forms.init_gaussian(plan, seed=0)
    g_in = forms.merge1(W.cores[:2])
    X = np.ones((3, 4, 4))
    with ad.count_flops() as c:
        stp.semi_contract(X, 2, g_in, 2, extra=[(3, 3)])
    assert c.flops == dict(flop_count(plan).steps)["step2"]


def test_compression_factor():
    assert round(compression_factor(429_000, 41_700)) == 10
    assert compression_factor(36.48e6, 0.20e6) == pytest.approx(179, rel=0.05)
    assert compression_factor(5, 5) == 1
    with pytest.raises(ZeroDivisionError):
        compression_factor(10, 0)
    # chaining two compressions multiplies their factors
    assert compression_factor(1000, 10) == pytest.approx(compression_factor(1000, 100) * compression_factor(100, 10))


def test_memory_ratio():
    tensor = LayerPlan("str", (8, 8), rank=4, t=2, kind="tensor")
    assert memory_ratio("tr", tensor) == 4
    assert memory_ratio("tr", tensor.with_(t=1)) == 1
    tucker = LayerPlan("sttu", (8, 8), rank=(4, 4), t=2, kind="tensor")
    assert memory_ratio("tucker", tucker) == sp.Rational(5, 2)
    assert memory_ratio("tucker", tucker.with_(t=1)) == 1
    with pytest.raises(PlanError):
        memory_ratio("cp", tucker)


def test_format_expr():
    assert format_expr(sp.Rational(931, 2) * R**2 + 18 * R) == "465.5R^2 + 18R"
    assert r2_coefficient(sp.Rational(11, 2) * R**2) == Fraction(11, 2)


def test_bundled_reports():
    rep = report_for("resnet32", "tr", 1)
    assert rep.total_expr == 908 * R**2 and not rep.footnotes
    rep = report_for("resnet32", "str", 2, rank=16, batch=128)
    assert rep.total_r2 == Fraction(935, 2)
    assert [r.name for r in rep.rows if r.note] == ["unit2 ResBlock1", "unit3 ResBlock1"]
    assert rep.total_numeric == int(sp.Rational(935, 2) * 256)
    assert rep.total_flops > 0
    assert "Total" in rep.format_text() and "467.5R^2" in rep.format_text()
    assert rep.to_csv().splitlines()[0].startswith("layer,params_expr")


def test_plan_file_schema(tmp_path):
    data = load_plan_file("wrn28")
    assert data["uncompressed_params"] == 36_480_000
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "rows": [], "extra": 1}')
    with pytest.raises(PlanError):
        load_plan_file(bad)
    bad.write_text('{"name": "x", "rows": [{"name": "r", "layers": [{"kind": "fc", "channels": [4, 4], '
                   '"reshape": {"tr": [[2, 2], [4]], "str": [[2, 3], [4]]}}]}]}')
    with pytest.raises(PlanError):
        load_plan_file(bad)
    with pytest.raises(PlanError):
        load_plan_file(tmp_path / "nope.json")
