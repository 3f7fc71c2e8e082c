"""Certified piecewise regular maps into Grassmannians and spheres, and the bundles they classify."""
from .errors import PwregError
from .simplicial import Simplex, SimplicialComplex, build_complex, barycentric_subdivide, induced_stratification
from .polyalg import MultiPoly, RegularFnVector
from .extend import FitConfig, approximate_on_simplex, extend_from_boundary
from .fmatrix import FMatrix, FScalar
from .grassmann import GrassmannOracle, GrassmannPoint, column_span_projection, grassmann_distance
from .sphere import ChartPoint, SphereOracle, choose_chart, stereographic, inverse_stereographic
from .pipeline import PiecewiseRegularMap, Target, approximate_complex, certify, precondition_subdivide
from .bundles import (PWBundle, algebraize_isomorphism, bundle_from_map, orthogonal_complement, product_bundle,
                      whitney_sum)
from .catalog import builtin_complex, load_complex, make_oracle

__version__ = "0.1.0"

__all__ = [
    "PwregError",
    "Simplex",
    "SimplicialComplex",
    "build_complex",
    "barycentric_subdivide",
    "induced_stratification",
    "MultiPoly",
    "RegularFnVector",
    "FitConfig",
    "approximate_on_simplex",
    "extend_from_boundary",
    "FMatrix",
    "FScalar",
    "GrassmannOracle",
    "GrassmannPoint",
    "column_span_projection",
    "grassmann_distance",
    "ChartPoint",
    "SphereOracle",
    "choose_chart",
    "stereographic",
    "inverse_stereographic",
    "PiecewiseRegularMap",
    "Target",
    "approximate_complex",
    "certify",
    "precondition_subdivide",
    "PWBundle",
    "algebraize_isomorphism",
    "bundle_from_map",
    "orthogonal_complement",
    "product_bundle",
    "whitney_sum",
    "builtin_complex",
    "load_complex",
    "make_oracle",
]
