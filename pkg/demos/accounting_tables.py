"""Parameter and FLOP accounting for the bundled ResNet-32 and WRN-28 plans.

Run: python3 demos/accounting_tables.py
"""

import sympy as sp

from stptensor.accounting import SYMBOLS, flop_formulas
from stptensor.networks import report_for

for name in ("resnet32", "wrn28"):
    for fmt, t in (("tr", 1), ("str", 2)):
        rep = report_for(name, fmt, t, rank=16)
        print(rep.format_text())
        print()

t = SYMBOLS["t"]
print("STR fully connected FLOPs by step:")
for step, expr in flop_formulas("tr", "fc"):
    print(f"  {step:18s} {sp.simplify(expr)}")
print("total at t=1:", sp.factor(sum(e for _, e in flop_formulas("tr", "fc")).subs(t, 1)))
