"""
Möbius line bundle versus the trivial one
=========================================

A rank-one real bundle over a circle is either trivial or the Möbius band.
We build both as piecewise algebraic subbundles of R^2, take orthogonal
complements, and ask for an algebraic isomorphism between them.
"""

import numpy as np

from pwreg.bundles import algebraize_isomorphism, bundle_from_map, orthogonal_complement, product_bundle
from pwreg.catalog import builtin_complex, make_oracle
from pwreg.errors import NotInjectiveOnFibers
from pwreg.pipeline import approximate_complex

K = builtin_complex("triangle-boundary")
pm = approximate_complex(K, make_oracle("mobius", "grassmann:R:2:1", K), 1e-2)
mobius = bundle_from_map(pm)
trivial = product_bundle(mobius.complex, "R", 2, 1)  # same (subdivided) complex
print("Möbius is a product bundle:", mobius.is_product())

# complement of a complement is the bundle itself, piece by piece
back = orthogonal_complement(orthogonal_complement(mobius))
same = all(mobius.projections()[s].equals(back.projections()[s]) for s in mobius.projections())
print("complement is an involution (exact):", same)

eye = np.eye(2)[..., None]


def identity(X):
    return np.broadcast_to(eye, (len(X),) + eye.shape)


sigma = algebraize_isomorphism(mobius, mobius, identity)
print("Möbius -> Möbius via the identity, sigma_min:", f"{sigma.certificate['sigma_min']:.3f}")

# no fiber map can carry the twisted band onto the flat one
try:
    algebraize_isomorphism(mobius, trivial, identity)
except NotInjectiveOnFibers as exc:
    print("Möbius -> trivial rejected:", exc)
