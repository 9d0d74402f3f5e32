"""Exception types raised across the toolkit."""


class RwrsError(Exception):
    """Base class for all toolkit errors."""


class NotAperiodic(RwrsError):
    """Walk fails the structural aperiodicity check and no override was given."""


class RegimeUndetermined(RwrsError):
    """Increment law matches none of the supported walk regimes."""


class SingularCovariance(RwrsError):
    """Planar regime requires an invertible increment covariance."""


class ConvolutionTooLarge(RwrsError):
    """Exact convolution would exceed the configured step/memory caps."""


class NotTransient(RwrsError):
    """Green sum requested for a walk that is not in the transient regime."""


class NoConvergence(RwrsError):
    """Green sum diverges (recurrent low-dimensional walk)."""


class CoordinateOverflow(RwrsError):
    """Lattice site coordinate outside the supported 63-bit range."""


class GridUnsorted(RwrsError):
    """Evaluation grid must be sorted and contained in [0, 1]."""


class DomainError(RwrsError):
    """Argument outside the domain of a norming rule."""


class TooShort(RwrsError):
    """Sequence too short for the requested statistic."""


class MissingQuantiles(RwrsError):
    """Change-point test needs a simulated null quantile table."""


class MissingParameter(RwrsError):
    """Walk model lacks a regime parameter needed by the operation."""


class MissingBoundary(RwrsError):
    """Sheet grid lacks a boundary value required by the operation."""


class FitDiverged(RwrsError):
    """Cauchy-domain scale fit did not stabilize; law has the wrong tail."""


class MeasureNotRepresentable(RwrsError):
    """Kernel lacks a finite signed-measure form usable by the identity path."""
