"""``stpt`` command line: selfcheck, plan, demo-sine, reconstruct."""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checks, forms, stp, tensorio
from .forms import ManifestError
from .networks import report_for
from .plan import FAMILIES, PlanError
from .tensor_core import ShapeError
from .tensorio import TensorFormatError
from .train import DivergenceError, demo_sine


def _threads():
    raw = os.environ.get("STP_TENSOR_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_selfcheck(args):
    if args.corrupt_residual:
        stp.RESIDUAL_MINOR = False
    seeds = range(args.seed, args.seed + 5)
    suites = [
        ("stp-vs-kronecker", lambda: checks.stp_vs_kron(1000, seed=args.seed), 1e-12),
        ("residual-loop-oracle", lambda: checks.residual_rule(seeds), 1e-10),
        ("t1-collapse", checks.family_suite(checks.collapse_at_t1, seeds), 1e-10),
        ("layer-vs-reconstruction", checks.family_suite(checks.layer_vs_reconstruction, seeds), 1e-9),
        ("merge-strategies", lambda: checks.merge_agreement(range(args.seed, args.seed + 20)), 1e-10),
    ]
    try:
        with ThreadPoolExecutor(max_workers=_threads()) as pool:
            results = list(pool.map(lambda s: checks.suite(*s), suites))
    finally:
        stp.RESIDUAL_MINOR = True
    width = max(len(r["suite"]) for r in results)
    print(f"{'suite':<{width}}  cases  max rel err  tol      status")
    for r in results:
        status = "PASS" if r["passed"] else "FAIL"
        print(f"{r['suite']:<{width}}  {r['cases']:>5}  {r['max_err']:.3e}    {r['tol']:.0e}    {status}")
    ok = all(r["passed"] for r in results)
    print("all suites passed" if ok else "selfcheck FAILED")
    return 0 if ok else 1


def cmd_plan(args):
    if args.numeric and args.rank is None:
        print("error: --numeric needs --rank", file=sys.stderr)
        return 2
    rep = report_for(args.plan_file, args.format, args.t, rank=args.rank, batch=args.batch)
    text = rep.format_text()
    print(text)
    if args.out:
        out = Path(args.out)
        out.write_text(rep.to_csv() if out.suffix == ".csv" else text + "\n")
    return 0


def cmd_demo_sine(args):
    rows = []
    for seed in range(args.seed, args.seed + args.seeds):
        try:
            run = demo_sine(seed=seed, epochs=args.epochs, lr=args.lr, out_dir=args.out)
        except DivergenceError as e:
            print(f"seed {seed}: diverged ({e})", file=sys.stderr)
            return 1
        rows.append(run)
        b, s = run.base_history[-1], run.stp_history[-1]
        print(f"seed {seed}: base train {b[1]:.3e} test {b[2]:.3e} | stp train {s[1]:.3e} test {s[2]:.3e}")
    r = rows[0]
    print(f"params: base-Net {r.base_params} (hidden {r.base_hidden}), "
          f"STP-Net {r.stp_params} (hidden {r.stp_hidden}, ratio {r.stp_hidden / r.base_hidden:g})")
    print(f"median test MSE: base-Net {np.median([x.base_test for x in rows]):.4e}, "
          f"STP-Net {np.median([x.stp_test for x in rows]):.4e}")
    if args.out:
        print(f"loss histories written to {args.out}")
    return 0


def cmd_reconstruct(args):
    try:
        W = forms.load_weight(args.archive)
        full = np.asarray(forms.reconstruct(W, args.strategy))
        tensorio.save(args.output, full)
    except (ManifestError, TensorFormatError, ShapeError, OSError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"{W.format} weight -> dense {list(full.shape)} written to {args.output}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="stpt", description="Semi-tensor-product factorized layers toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("selfcheck", help="run the oracle equivalence suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--corrupt-residual", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selfcheck)

    s = sub.add_parser("plan", help="parameter/FLOP report for a network plan file")
    s.add_argument("plan_file", help="JSON plan file, or a bundled name: resnet32, wrn28")
    s.add_argument("--format", choices=FAMILIES, default="str")
    s.add_argument("--t", type=int, default=2, help="STP ratio (ignored by classical formats)")
    s.add_argument("--rank", "-R", type=int, default=None)
    s.add_argument("--batch", type=int, default=None, help="batch size for FLOP totals")
    s.add_argument("--numeric", action="store_true", help="require numeric counts at --rank")
    s.add_argument("--out", help="write the report (.csv for CSV, else text)")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("demo-sine", help="train base-Net and STP-Net on the sine target")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.add_argument("--epochs", type=int, default=2000)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--out", help="directory for loss CSVs")
    s.set_defaults(func=cmd_demo_sine)

    s = sub.add_parser("reconstruct", help="dense reconstruction of a weight archive")
    s.add_argument("archive")
    s.add_argument("output")
    s.add_argument("--strategy", choices=("sequential", "hierarchical"), default="hierarchical")
    s.set_defaults(func=cmd_reconstruct)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PlanError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
