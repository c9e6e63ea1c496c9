"""Fit a 1-D function with a dense MLP and with a weight-sharing STP MLP.

The STP network replaces the 64x64 hidden map by a 32x32 weight applied
with the semi-tensor product, a quarter of the hidden parameters.

Run: python3 demos/sine_regression.py [n_seeds]
"""

import sys

import numpy as np

from stptensor.train import demo_sine

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 3
runs = []
for seed in range(n_seeds):
    r = demo_sine(seed=seed)
    runs.append(r)
    print(f"seed {seed}: base test MSE {r.base_test:.3e} ({r.base_hidden} hidden weights), "
          f"STP test MSE {r.stp_test:.3e} ({r.stp_hidden} hidden weights)")
print(f"median base {np.median([r.base_test for r in runs]):.3e}, "
      f"median STP {np.median([r.stp_test for r in runs]):.3e}")
