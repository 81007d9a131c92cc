"""Exception types shared across the package."""


class StokesWKBError(Exception):
    """Base class for all package-specific errors."""


class NonSimpleZero(StokesWKBError):
    """A computed zero fails the simplicity or separation threshold."""


class BranchTrackingFailure(StokesWKBError):
    """Root continuation could not be made continuous within the
    subdivision budget."""


class TraceDivergence(StokesWKBError):
    """The ray corrector failed to converge back onto the level set."""


class GenerationOverflow(StokesWKBError):
    """New crossings still appear at the configured generation cap.

    build_graph reports this through StokesGraph.truncated instead of
    raising; the exception type exists for callers that want to promote
    the flag.
    """


class TangentialCrossing(StokesWKBError):
    """A path segment meets a Stokes ray below the transversality
    threshold."""


class StepUnderflow(StokesWKBError):
    """The adaptive integrator needs a step below the minimum."""


class ToleranceFailure(StokesWKBError):
    """Embedded error estimate exceeded the accuracy budget."""


class ZeroOfDifferential(StokesWKBError):
    """Operation evaluated at (or too close to) a zero of the
    differential."""


class FactorMismatch(StokesWKBError):
    """Decomposition events and supplied Stokes factors do not line up."""


class NonUnipotentConnection(StokesWKBError):
    """Fitted connection matrix has diagonal entries too far from 1."""


class LadderTooShort(StokesWKBError):
    """An asymptotic ladder needs at least 4 strictly increasing t values."""


class DominanceTie(StokesWKBError):
    """No unique dominant sheet on a segment (anti-Stokes direction)."""


class SectorTooWide(StokesWKBError):
    """Requested sector exceeds the validity angle of the model
    asymptotics."""


class UnsupportedOrder(StokesWKBError):
    """Operation is only defined for differential order n > 2."""


class RoutingFailure(StokesWKBError):
    """No zero-avoiding path could be constructed between two points."""


class ConfigError(StokesWKBError):
    """Invalid experiment configuration."""


class NearDoubleCrossing(UserWarning):
    """Two consecutive path/ray crossings closer than the crossing
    tolerance."""


class CrossSectorRequest(UserWarning):
    """Rescaled-distance pair spans different Stokes sectors; the flat
    prediction is omitted."""
