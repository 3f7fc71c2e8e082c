"""
Quaternionic lines over a triangle
==================================

Points of G_1(H^2) are 2x2 quaternionic projection matrices. We approximate
a wavy family of lines over a triangle and look at the usual projection
identities on the result.
"""

import numpy as np

from pwreg.catalog import builtin_complex, make_oracle
from pwreg.fmatrix import real_embed
from pwreg.pipeline import approximate_complex
from pwreg.simplicial import complex_samples

K = builtin_complex("triangle")
f = make_oracle("wave:0.3", "grassmann:H:2:1", K, seed=5)
pm = approximate_complex(K, f, 0.05)
print("sup error:", f"{pm.certificate.eps_achieved:.4f}", "rank margins:",
      {s: round(v, 3) for s, v in sorted(pm.certificate.rank_margins.items())})

_, X = complex_samples(K, 24)
P = real_embed(pm.evaluate(X), "H")  # 8x8 real matrices standing in for 2x2 quaternion ones
print("idempotency residual:", f"{np.abs(P @ P - P).max():.2e}")
print("hermitian residual:", f"{np.abs(P - np.swapaxes(P, 1, 2)).max():.2e}")
print("trace (4 per quaternionic line):", f"{np.trace(P, axis1=1, axis2=2).mean():.6f}")
