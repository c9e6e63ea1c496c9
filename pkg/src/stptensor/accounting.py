"""Closed-form parameter counts, FLOP estimates and compression metrics.

Counts are exact rationals in the rank ``R`` (sympy expressions), so
half-integer coefficients such as ``5.5 R^2`` survive until a numeric rank
is substituted.  FLOP estimates are the per-step expressions of the layer
tables, kept as written (including their upper-bound merge terms).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp

from .plan import LayerPlan, PlanError

R_SYM = sp.Symbol("R", positive=True)
t_sym, B_sym, I_sym, O_sym = sp.symbols("t B I O", positive=True)
H_sym, W_sym, Hp_sym, Wp_sym, K_sym = sp.symbols("H W Hp Wp K", positive=True)
SYMBOLS = {
    "t": t_sym, "B": B_sym, "R": R_SYM, "I": I_sym, "O": O_sym,
    "H": H_sym, "W": W_sym, "Hp": Hp_sym, "Wp": Wp_sym, "K": K_sym,
}


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def param_expr(plan: LayerPlan):
    """Parameter count as a sympy expression in ``R`` (or a number if the
    plan carries a numeric rank)."""
    t = plan.t
    if plan.rank is None:
        ranks = None
        R = R_SYM
    else:
        ranks = plan.ranks
        R = sp.Integer(ranks[0])
    inv = sp.Rational(1, t)
    stp = lambda d: t > 1 and d % t == 0  # noqa: E731
    I, O = plan.in_dims, plan.out_dims

    if plan.family == "tr":
        total = sum(R**2 * d * (inv**2 if stp(d) else 1) for d in I + O)
        if plan.kind == "conv":
            total += plan.kernel**2 * R**2
        return sp.expand(total)

    if plan.family == "tt" and plan.kind == "fc":
        total = R * I[0]
        total += sum(R**2 * d * (inv**2 if stp(d) else 1) for d in I[1:])
        total += R * plan.O * (inv**2 if stp(plan.O) else 1)
        return sp.expand(total)

    if plan.family == "tt":
        N = len(I)
        head = stp(O[0])
        if N == 1:
            total = I[0] * O[0] * R * (inv**2 if head else 1)
        else:
            total = I[0] * O[0] * R * (inv if head else 1)
            for n in range(1, N):
                c = R**2 * I[n] * O[n] * (inv**2 if stp(I[n]) else 1)
                if n == N - 1 and head:
                    c *= inv
                total += c
        total += plan.kernel**2 * R
        return sp.expand(total)

    # Tucker family
    if plan.kind == "tensor":
        dims = I
        rs = [R_SYM] * len(dims) if ranks is None else (
            [sp.Integer(r) for r in ranks] * (len(dims) if len(ranks) == 1 else 1)
        )
        core = sp.Mul(*rs)
    else:
        dims = (plan.I, plan.O)
        rs = [R, R] if ranks is None or len(ranks) == 1 else [sp.Integer(r) for r in ranks]
        core = rs[0] * rs[1] * (plan.kernel**2 if plan.kind == "conv" else 1)
    total = core
    for d, r in zip(dims, rs):
        divisible = stp(d) and (ranks is None or int(r) % t == 0)
        total += r * d * (inv**2 if divisible else 1)
    return sp.expand(total)


def param_count(plan: LayerPlan):
    """Exact parameter count: an ``int`` for numeric ranks, else an expression in R."""
    e = param_expr(plan)
    if plan.rank is None:
        return e
    if not e.is_integer:
        raise PlanError(f"non-integer parameter count {e}; check rank/t divisibility")
    return int(e)


def r2_coefficient(expr):
    """Coefficient of R^2 as a Fraction (exact)."""
    c = sp.Poly(expr, R_SYM).coeff_monomial(R_SYM**2)
    c = sp.Rational(c)
    return Fraction(int(c.p), int(c.q))


def format_coef(c):
    c = Fraction(c)
    if c.denominator == 1:
        return str(c.numerator)
    if c.denominator in (2, 4, 8):
        return f"{float(c):g}"
    return str(c)


def format_expr(expr):
    """Render a polynomial in R like ``465.5R^2 + 18R``."""
    expr = sp.expand(expr)
    if not expr.free_symbols:
        return str(expr)
    poly = sp.Poly(expr, R_SYM)
    parts = []
    for (k,), c in sorted(poly.terms(), reverse=True):
        c = Fraction(int(sp.Rational(c).p), int(sp.Rational(c).q))
        var = "" if k == 0 else ("R" if k == 1 else f"R^{k}")
        coef = format_coef(c)
        parts.append(var if coef == "1" and var else f"{coef}{var}")
    return " + ".join(parts)


def dense_param_count(plan: LayerPlan):
    """Weights of the uncompressed layer (no bias)."""
    if plan.kind == "conv":
        return plan.kernel**2 * plan.I * plan.O
    if plan.kind == "fc":
        return plan.I * plan.O
    return plan.I


def stp_dense_param_count(n, p, q):
    """An STP-dense layer X (.. x n*p) ⋉ W (p x q) stores p*q weights."""
    return p * q


# ---------------------------------------------------------------------------
# FLOPs
# ---------------------------------------------------------------------------


def flop_formulas(family: str, kind: str):
    """Per-step FLOP expressions ``[(step, expr), ...]`` in the symbols of
    :data:`SYMBOLS`; substitute ``t = 1`` for the classical column.

    ``tr`` and ``tt`` follow the published layer cost tables.  ``tucker`` has no
    table; its steps are the direct multiply-add counts of the three-step
    Tucker-2 forward and are labelled as such.
    """
    t, B, R, I, O = t_sym, B_sym, R_SYM, I_sym, O_sym
    H, W, Hp, Wp, K = H_sym, W_sym, Hp_sym, Wp_sym, K_sym
    if family == "tr" and kind == "fc":
        return [
            ("step1 merge (<=)", 4 / t**3 * R**3 * (I + O)),
            ("step2", 2 / t * B * R**2 * I),
            ("step3", 2 / t * B * R**2 * O),
        ]
    if family == "tt" and kind == "fc":
        return [
            ("step1 merge (<=)", 4 / t * R**2 * I),
            ("step2", 2 * B * R * I),
            ("step3", 2 / t * B * R * O),
        ]
    if family == "tr" and kind == "conv":
        return [
            ("step1 merge (<=)", 4 / t**3 * R**3 * (I + O)),
            ("step2", 2 / t * B * H * W * R**2 * I),
            ("step3 conv", 2 * Hp * Wp * R**2 * K**2),
            ("step4", 2 / t * B * Hp * Wp * R**2 * O),
        ]
    if family == "tt" and kind == "conv":
        return [
            ("step1 merge (<=)", 4 / t**2 * R**2 * I * O),
            ("step1 conv", 2 * Hp * Wp * R * K**2),
            ("step2", 2 / t * B * Hp * Wp * I * O * R),
        ]
    if family == "tucker" and kind == "conv":
        return [
            ("step1 reduce (derived)", 2 / t * B * H * W * I * R),
            ("step2 conv (derived)", 2 * B * Hp * Wp * K**2 * R**2),
            ("step3 expand (derived)", 2 / t * B * Hp * Wp * R * O),
        ]
    if family == "tucker" and kind == "fc":
        return [
            ("step1 reduce (derived)", 2 / t * B * I * R),
            ("step2 core (derived)", 2 * B * R**2),
            ("step3 expand (derived)", 2 / t * B * R * O),
        ]
    raise PlanError(f"no FLOP model for {family}/{kind}")


@dataclass
class FlopReport:
    steps: list
    total: object

    def __iter__(self):
        return iter(self.steps)


def flop_count(plan: LayerPlan):
    """Evaluate each step expression of the plan's table numerically."""
    if plan.rank is None:
        raise PlanError("FLOP counts need a numeric rank")
    if len(plan.ranks) != 1:
        raise PlanError("FLOP tables assume a single rank R")
    subs = {t_sym: plan.t, B_sym: plan.batch, R_SYM: plan.ranks[0], I_sym: plan.I, O_sym: plan.O}
    if plan.kind == "conv":
        Hp, Wp = plan.out_spatial()
        subs.update({H_sym: plan.height, W_sym: plan.width, Hp_sym: Hp, Wp_sym: Wp, K_sym: plan.kernel})
    steps = [(name, sp.nsimplify(e.subs(subs))) for name, e in flop_formulas(plan.family, plan.kind)]
    return FlopReport(steps, sum(v for _, v in steps))


# ---------------------------------------------------------------------------
# ratios
# ---------------------------------------------------------------------------


def compression_factor(original_params, compressed_params):
    """Original parameter count divided by the compressed one."""
    if compressed_params <= 0 or original_params <= 0:
        raise ZeroDivisionError("parameter counts must be positive")
    return original_params / compressed_params


def memory_ratio(pair: str, plan: LayerPlan):
    """Storage of the classical decomposition over its STP counterpart.

    ``pair`` is ``"tucker"`` (Tucker vs STTu) or ``"tr"`` (TR vs STR); the
    plan describes a plain tensor (``kind="tensor"``) of dims ``input_dims``.
    """
    if pair not in ("tucker", "tr"):
        raise PlanError(f"unknown format pair {pair!r}")
    stp = {"tucker": "sttu", "tr": "str"}[pair]
    base = plan.with_(format=pair, kind="tensor", output_dims=(), t=1)
    semi = plan.with_(format=stp, kind="tensor", output_dims=())
    return sp.nsimplify(param_expr(base) / param_expr(semi))


# ---------------------------------------------------------------------------
# network reports
# ---------------------------------------------------------------------------


@dataclass
class PlanRow:
    name: str
    layers: tuple
    repeat: int = 1
    reference: float | None = None


@dataclass
class RowReport:
    name: str
    expr: object
    numeric: int | None
    flops: object | None
    reference: float | None
    note: str = ""


@dataclass
class NetworkReport:
    name: str
    format: str
    t: int
    rank: int | None
    rows: list
    total_expr: object
    total_numeric: int | None
    total_flops: object | None
    uncompressed: int | None
    footnotes: list = field(default_factory=list)

    @property
    def total_r2(self):
        return r2_coefficient(self.total_expr)

    @property
    def compression_factor(self):
        if self.total_numeric is None or not self.uncompressed:
            return None
        return compression_factor(self.uncompressed, self.total_numeric)

    def format_text(self):
        head = ["layer", "params", "ref", "numeric", "flops"]
        body = []
        for r in self.rows:
            body.append([
                r.name + (" *" if r.note else ""),
                format_expr(r.expr),
                "" if r.reference is None else f"{format_coef(Fraction(r.reference).limit_denominator(8))}R^2",
                "" if r.numeric is None else f"{r.numeric:,}",
                "" if r.flops is None else f"{float(r.flops):.4g}",
            ])
        body.append([
            "Total",
            format_expr(self.total_expr),
            "",
            "" if self.total_numeric is None else f"{self.total_numeric:,}",
            "" if self.total_flops is None else f"{float(self.total_flops):.4g}",
        ])
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()  # noqa: E731
        lines = [f"{self.name}  format={self.format}  t={self.t}  R={self.rank if self.rank else 'symbolic'}"]
        lines += [fmt(head), fmt(["-" * w for w in widths])]
        lines += [fmt(row) for row in body]
        if self.uncompressed:
            lines.append(f"uncompressed params: {self.uncompressed:,}")
        cf = self.compression_factor
        if cf is not None:
            lines.append(f"compression factor: {cf:.1f}x")
        for i, note in enumerate(self.footnotes, 1):
            lines.append(f"* {note}")
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["layer", "params_expr", "r2_coefficient", "reference_r2", "numeric", "flops"])
        for r in self.rows + [RowReport("Total", self.total_expr, self.total_numeric, self.total_flops, None)]:
            w.writerow([
                r.name, format_expr(r.expr), format_coef(r2_coefficient(r.expr)),
                "" if r.reference is None else r.reference,
                "" if r.numeric is None else r.numeric,
                "" if r.flops is None else int(r.flops),
            ])
        return buf.getvalue()


def network_report(rows, uncompressed=None, name="network", rank=None, batch=None):
    """Per-row and total parameter counts (symbolic and numeric), FLOPs and CF.

    ``rows`` is a sequence of :class:`PlanRow` whose layer plans carry no
    rank; ``rank`` is substituted for the numeric columns and ``batch``
    enables FLOP totals.
    """
    rows = list(rows)
    if not rows:
        raise PlanError("network_report needs at least one row")
    out, notes = [], []
    fmt = rows[0].layers[0].format
    t = rows[0].layers[0].t
    for row in rows:
        expr = sum(param_expr(p) for p in row.layers) * row.repeat
        numeric = int(expr.subs(R_SYM, rank)) if rank is not None else None
        flops = None
        if rank is not None and batch is not None:
            flops = row.repeat * sum(
                flop_count(p.with_(rank=rank, batch=batch)).total for p in row.layers
            )
        note = ""
        if row.reference is not None and r2_coefficient(expr) != Fraction(row.reference).limit_denominator(8):
            note = (
                f"{row.name}: the reference table lists {format_coef(Fraction(row.reference).limit_denominator(8))}R^2, "
                f"the storage schema gives {format_coef(r2_coefficient(expr))}R^2 "
                f"(suspected arithmetic slip in the source table)"
            )
            notes.append(note)
        out.append(RowReport(row.name, sp.expand(expr), numeric, flops, row.reference, note))
    total = sp.expand(sum(r.expr for r in out))
    total_num = int(total.subs(R_SYM, rank)) if rank is not None else None
    total_flops = sum(r.flops for r in out) if rank is not None and batch is not None else None
    return NetworkReport(name, fmt, t, rank, out, total, total_num, total_flops, uncompressed, notes)
