"""Exception hierarchy shared by all spikelab modules."""


class SpikelabError(Exception):
    """Base class for numerical failures raised by spikelab."""


# --- ground-state solver -------------------------------------------------

class NoBracket(SpikelabError):
    """The shooting parameter could not be bracketed between undershoot and overshoot."""


class NotConverged(SpikelabError):
    """An iterative solve stalled above its tolerance."""


class UnsupportedMoment(SpikelabError):
    """Requested angular moment is outside the supported (a, b) table."""


class QuadratureUnstable(SpikelabError):
    """Two quadrature resolutions disagree above the requested tolerance."""


# --- geometry -------------------------------------------------------------

class OutOfChart(SpikelabError):
    """A point left the validity region of a boundary chart."""


class SingularMetric(SpikelabError):
    """The pullback metric lost positivity (point beyond the focal set)."""


class DegenerateLandscape(SpikelabError):
    """Boundary mean curvature is constant within tolerance; no isolated critical points."""


# --- reduction ------------------------------------------------------------

class ChartOverflow(SpikelabError):
    """Cutoff radius exceeds the validity radius of the Fermi chart."""


class DegenerateH(SpikelabError):
    """Mean curvature too small for a curvature-normalized quantity."""


# --- linearized spectrum ----------------------------------------------------

class DimensionMismatch(SpikelabError):
    """Profile dimension and grid dimension disagree."""


class EigenNotConverged(SpikelabError):
    """Eigenvalue iteration failed to converge."""


# --- pde -------------------------------------------------------------------

class MeshTooCoarse(SpikelabError):
    """Mesh size cannot resolve the boundary curvature."""


class LinearSolveFailed(SpikelabError):
    """Sparse linear solve failed or returned non-finite values."""


class Diverged(SpikelabError):
    """Newton iteration exhausted its line search."""


class ConvergedToTrivial(SpikelabError):
    """Newton iteration collapsed onto the zero solution."""
