"""Exception types raised by the library.

All numerical failure modes are typed so callers (Newton solvers,
continuation drivers, the CLI) can distinguish "no such object" from
"computation broke down".
"""


class ImpactmelError(Exception):
    """Base class for all library errors."""


class ConfigError(ImpactmelError):
    """A system/run configuration is malformed or violates a model hypothesis."""


class DomainError(ImpactmelError):
    """An argument lies outside the mathematical domain of the operation."""


class FlowError(ImpactmelError):
    """Base class for event-driven integration failures."""


class GrazingImpact(FlowError):
    """The trajectory reached the switching line with |y| below the grazing
    tolerance; the transversality assumption fails and the impact map is
    not continued."""

    def __init__(self, message, state=None, index=None):
        super().__init__(message)
        self.state = state
        self.index = index


class NoCrossing(FlowError):
    """The trajectory did not return to the switching line within the time
    or escape guards (e.g. it went past a saddle)."""

    def __init__(self, message, state=None, index=None):
        super().__init__(message)
        self.state = state
        self.index = index


class TruncationError(ImpactmelError):
    """An improper-integral tail bound could not be met within the allowed
    window."""


class ResidualUnavailable(ImpactmelError):
    """A periodic-orbit residual could not be evaluated because the
    underlying flow failed (grazing, escape, ...)."""

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class NoConvergence(ImpactmelError):
    """An iterative solver exhausted its iteration budget."""


class SingularJacobian(ImpactmelError):
    """Newton hit a (numerically) singular Jacobian."""


class NoSeed(ImpactmelError):
    """The dissipative seed equation has no (simple) zero for the requested
    dissipation/forcing ratio."""


class DegenerateMelnikov(ImpactmelError):
    """The Melnikov function is identically zero at the working tolerance;
    the first-order analysis is inconclusive."""


class NoZero(ImpactmelError):
    """A scanned function has no sign change over one period."""
