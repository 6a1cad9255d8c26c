"""Exception types raised by the lattice constructions and samplers."""


class McsleError(Exception):
    """Base class for all package errors."""


class DomainError(McsleError):
    pass


class MeshTooCoarse(DomainError):
    """Hole vanished or boundary components merged at the requested mesh."""


class MarksCoincide(DomainError):
    pass


class DisconnectsDomain(DomainError):
    """Carving would split the interior into several components."""


class TouchesMarks(DomainError):
    """Carved set enters the protective neighborhood of a marked point."""


class NotACrosscut(McsleError):
    pass


class SingularSystem(McsleError):
    """Dirichlet solve requested on a domain with empty interior."""


class CrosscutsIntersect(McsleError):
    pass


class ContractionViolated(McsleError):
    """Spectral radius of Q^{1/2} M Q^{1/2} is not below 1."""


class OperatorNotContraction(McsleError):
    pass


class ObstacleTouchesMinusArcs(McsleError):
    """Carved set too close to the arcs the energy difference integrates over."""


class IncompatibleReference(McsleError):
    pass


class NonPositiveModulus(McsleError):
    pass


class TraceStuck(McsleError):
    """Interface tracer left the expected termination set."""


class RejectionBudgetExhausted(McsleError):
    pass


class OverlappingTargets(McsleError):
    pass


class FillSwallowsTarget(McsleError):
    """Hull filling reached the target arc; sample must be discarded."""


class DegenerateSample(McsleError):
    pass


class TooFewRestrictedSamples(McsleError):
    pass


class ConfigError(McsleError):
    """Invalid run configuration; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
