"""Left semi-tensor product basics and an STR layer against its dense weight.

Run: python3 demos/stp_basics.py
"""

import numpy as np

from stptensor import LayerPlan, init_gaussian, lstp_vec, reconstruct, stp_mat, str_fcl_forward

rng = np.random.default_rng(0)

# Vector STP: x has 6 entries split into 3 blocks of 2, w weights each block.
x = np.arange(6.0)
w = np.array([1.0, 10.0, 100.0])
print("x ⋉ w =", lstp_vec(x, w))

# Matrix STP equals X (W ⊗ I_N) when X has N times as many columns as W has rows.
X = rng.normal(size=(3, 8))
W = rng.normal(size=(4, 5))
err = np.abs(stp_mat(X, W) - X @ np.kron(W, np.eye(2))).max()
print(f"X ⋉ W vs X (W ⊗ I_2): max abs diff {err:.1e}")

# An STR fully connected layer stores cores at 1/t of their ring size.
for t in (1, 2):
    plan = LayerPlan("str", (4, 4), (4, 4), rank=8, t=t)
    Wf = init_gaussian(plan, seed=0)
    full = reconstruct(Wf)
    Xb = rng.normal(size=(5, 4, 4))
    Y = np.asarray(str_fcl_forward(Xb, Wf))
    dense = np.tensordot(Xb, full, axes=([1, 2], [0, 1]))
    stored = sum(c.size for c in Wf.tensors())
    print(f"t={t}: stored {stored:4d} numbers for a {full.size}-entry weight, "
          f"layer vs dense max diff {np.abs(Y - dense).max():.1e}")
