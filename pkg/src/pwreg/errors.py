"""Exception hierarchy shared by all modules."""


class PwregError(Exception):
    """Base class; `code` is the machine-readable name used in CLI error JSON."""

    code = "PwregError"

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_json(self):
        return {"error": self.code, "message": str(self), "details": _jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return str(obj)


def _make(name, doc):
    cls = type(name, (PwregError,), {"__doc__": doc, "code": name})
    return cls


# simplicial
AffineDependence = _make("AffineDependence", "Simplex vertices are affinely dependent.")
BadIntersection = _make("BadIntersection", "Two simplices meet outside a common face.")
ComponentSplit = _make("ComponentSplit", "A stratum component meets more than one simplex.")
OutsideDomain = _make("OutsideDomain", "Point does not lie in |K|.")
RefinementTooLarge = _make("RefinementTooLarge", "The hull-intersection refinement exceeds its work budget.")

# polyalg
DenominatorZero = _make("DenominatorZero", "Rational function evaluated where its denominator vanishes.")
NonFinite = _make("NonFinite", "NaN or infinite float cannot be snapped to a rational.")
RankDeficient = _make("RankDeficient", "Design or frame matrix is (numerically) rank deficient.")

# extend
IncompatibleFacetData = _make("IncompatibleFacetData", "Facet data disagree on a shared face.")
DenominatorVanishes = _make("DenominatorVanishes", "Common denominator fails its positivity certificate.")


class DegreeCapExceeded(PwregError):
    """Target accuracy not reached at the degree cap; `best` holds the best result."""

    code = "DegreeCapExceeded"

    def __init__(self, message="", best=None, achieved=None, **details):
        super().__init__(message, achieved=achieved, **details)
        self.best = best
        self.achieved = achieved


# grassmann / sphere
ShapeMismatch = _make("ShapeMismatch", "Matrix shapes or field tags do not match.")
OscillationTooLarge = _make("OscillationTooLarge", "Map varies too much on one simplex.")
RankLost = _make("RankLost", "Fitted frame dropped rank.")
GaugeMismatch = _make("GaugeMismatch", "Facet frames cannot be glued at matrix level and no span-level fallback applies.")
ChartPole = _make("ChartPole", "Stereographic projection evaluated at the chart point.")
NoChartFound = _make("NoChartFound", "No signed basis point keeps the required margin.")

# pipeline / bundles / cli
SubdivisionCapExceeded = _make("SubdivisionCapExceeded", "Oscillation bound not met within the subdivision cap.")
CertificateMismatch = _make("CertificateMismatch", "Recomputed certificate disagrees with the stored one.")
ConstructionFailed = _make("ConstructionFailed", "A per-simplex construction failed.")
InvalidCertificate = _make("InvalidCertificate", "Map carries no valid certificate.")
ComplexMismatch = _make("ComplexMismatch", "Bundles live over different complexes or fields.")
NotInjectiveOnFibers = _make("NotInjectiveOnFibers", "Candidate morphism is not bijective on fibers.")
BadInput = _make("BadInput", "Malformed job input.")
