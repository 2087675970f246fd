"""Exception hierarchy shared by every module."""


class DeltaCertError(Exception):
    """Base class for all errors raised by deltacert."""


# --- integration -----------------------------------------------------------

class IntegrationError(DeltaCertError):
    pass


class IntegrationDiverged(IntegrationError):
    """State norm exceeded the configured blow-up bound."""


class StepUnderflow(IntegrationError):
    """Adaptive step collapsed below a representable size."""


class DomainEscape(DeltaCertError):
    """The (extended) Poincare map is undefined at the requested point."""


class NoImpact(DomainEscape):
    """No downward crossing of the requested guard level within the horizon."""


class GrazingEvent(DomainEscape):
    """Guard crossing found, but the crossing is (numerically) tangential."""


class ResetDomainError(DomainEscape):
    """The reset map rejected the pre-impact state."""


class SingularContact(ResetDomainError):
    """Contact constraint matrix J D^-1 J^T is singular."""


# --- solvers ---------------------------------------------------------------

class NoConvergence(DeltaCertError):
    pass


class SingularJacobian(NoConvergence):
    """Newton step could not be solved; reported as a convergence failure."""


class NotStable(DeltaCertError):
    pass


class NotSymmetric(DeltaCertError):
    pass


class NotPositiveDefinite(DeltaCertError):
    pass


# --- certification ---------------------------------------------------------

class BadConstants(DeltaCertError):
    pass


class HypothesisViolated(DeltaCertError):
    """delta >= delta_max: the sublevel set may leave the map's domain."""


class DegenerateConfig(DeltaCertError):
    pass


class ConfigError(DeltaCertError):
    pass
