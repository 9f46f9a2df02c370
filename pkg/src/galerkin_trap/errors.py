"""Exception types shared across the package."""


class GalerkinTrapError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(GalerkinTrapError):
    """An argument violates a documented precondition."""


class HypothesisError(ParameterError):
    """A decay-exponent hypothesis needed for a sum or bound to converge fails."""


class InvariantViolation(GalerkinTrapError):
    """A stored field breaks one of its structural invariants."""


class ResolutionError(ParameterError):
    """Collocation grid too coarse to evaluate the quadratic product exactly."""


class ConsistencyError(GalerkinTrapError):
    """An intermediate result is internally inconsistent (broken upstream input)."""


class StepRejectionError(GalerkinTrapError):
    """An integration step drifted off the admissible manifold; reduce the step."""


class CertificationError(GalerkinTrapError):
    """Boundary certification could not be carried out as requested."""
