"""Error taxonomy shared across the library, service and CLI.

Every failure the package can raise maps onto one of four exit classes:

* 0 -- success (no exception)
* 2 -- the input configuration is malformed or inconsistent
* 3 -- the space violates a structural hypothesis (bad gluing, inadmissible
  weight, mesh not compatible with a Markov construction)
* 4 -- a numeric routine failed to meet its contract (solver residual,
  eigensolver non-convergence)
"""


class GluedHeatError(Exception):
    """Base class; `exit_code` drives the CLI and the service error mapping."""

    exit_code = 1


class ConfigError(GluedHeatError):
    """Malformed or contradictory configuration input."""

    exit_code = 2


class InvalidParameterError(ConfigError):
    """A parameter is outside its documented domain."""


class HypothesisViolationError(GluedHeatError):
    """The constructed space breaks a structural hypothesis."""

    exit_code = 3


class GlueAmbiguityError(HypothesisViolationError):
    """Vertex identification is ambiguous at the given tolerance."""


class BoundaryIntersectionError(HypothesisViolationError):
    """An identified vertex lies on the boundary of one of its pieces."""


class UnsupportedIntersectionError(HypothesisViolationError):
    """The identified subcomplex has dimension k >= 2 or pathological shape."""


class NonIntegrableWeightError(HypothesisViolationError):
    """Power-weight exponent outside the integrable range (-(n-k), n-k)."""


class MeshComplianceError(HypothesisViolationError):
    """Stiffness matrix has positive off-diagonal entries; no jump chain."""


class NumericError(GluedHeatError):
    """A numeric routine failed its accuracy or convergence contract."""

    exit_code = 4
