"""
A degree-one map from a triangle's boundary to the circle
=========================================================

The boundary of a triangle is a topological circle. The radial map sends
each point to its direction from the centroid. We replace it by a piecewise
regular map (one rational map per edge, exactly equal at the vertices) and
check the certificate.
"""

import numpy as np

from pwreg.catalog import builtin_complex, make_oracle
from pwreg.pipeline import approximate_complex, certify
from pwreg.simplicial import complex_samples

K = builtin_complex("triangle-boundary")
f = make_oracle("radial", "sphere:1", K)
pm = approximate_complex(K, f, 0.05)

cert = pm.certificate
print("simplices:", len(pm.per_simplex), "subdivision depth:", pm.subdivision_depth)
print("sup error (sampled):", f"{cert.eps_achieved:.4f}", "target:", cert.eps_target)
print("all boundary identities exact:", all(cert.boundary_exact.values()))

# every piece lands exactly on the circle: num_1^2 + num_2^2 == den^2 as polynomials
print("unit norm exact on every piece:", all(cert.unit_norm_exact.values()))

# a second look at twice the pitch should tell the same story
again = certify(pm, f, 2 * cert.pitch)
print("re-certified at pitch", 2 * cert.pitch, "->", f"{again.eps_achieved:.4f}")

# the approximation still goes once around the circle
_, X = complex_samples(K, 64)
ang = np.arctan2(X[:, 1] - 1 / 3, X[:, 0] - 1 / 3)
order = np.argsort(ang)
Y = pm.evaluate(X[order])
turns = np.sum(np.diff(np.unwrap(np.arctan2(Y[:, 1], Y[:, 0])))) / (2 * np.pi)
print("winding number:", round(turns))
