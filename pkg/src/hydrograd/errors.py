"""Exception types raised across the toolkit.

Every error that user input can trigger derives from HydrogradError so the
command line layer can map it to an exit code in one place.  Numerical
failures (non-finite values produced by an otherwise valid setup) derive
from NumericalError instead.
"""


class HydrogradError(Exception):
    """Base class for invalid inputs or inconsistent data."""


class NumericalError(Exception):
    """Base class for numerical failures on otherwise valid inputs."""


# --- mesh -----------------------------------------------------------------

class CycleError(HydrogradError):
    """Flow direction grid contains a cycle among active cells."""


class InvalidCodeError(HydrogradError):
    """Flow direction code outside 0..8 on an active cell."""


class GaugeOffGridError(HydrogradError):
    """Gauge placed outside the grid or on an inactive cell."""


class AmbiguousOutletError(HydrogradError):
    """Maximum drainage area is shared by more than one cell."""


# --- data -----------------------------------------------------------------

class RasterFormatError(HydrogradError):
    """Malformed grid file or inconsistent header between grids."""


class MissingTimestepError(HydrogradError):
    """Forcing record does not cover the simulation window."""


class NegativeForcingError(HydrogradError):
    """Negative rainfall or evapotranspiration value."""


class ConfigError(HydrogradError):
    """Missing or inconsistent run configuration entry."""


# --- parameters and mappings ----------------------------------------------

class BoundsError(HydrogradError):
    """Parameter bounds with lower >= upper, or value outside (lower, upper)."""


class BackgroundOutOfBoundsError(BoundsError):
    """Spatially uniform background value outside the open bounds interval."""


class ShapeMismatchError(HydrogradError):
    """Array arguments whose shapes are inconsistent with the mesh/mapping."""


class NegativeBaseError(HydrogradError):
    """Negative descriptor raised to a fractional exponent."""


# --- cost ------------------------------------------------------------------

class DegenerateObservationsError(HydrogradError):
    """Observed series with fewer than two valid points or zero variance."""


class AllGaugesDegenerateError(HydrogradError):
    """Every gauge in the cost aggregation is degenerate."""


class EmptyEventError(HydrogradError):
    """Flood event window with no valid observations."""


class ZeroBaselineError(HydrogradError):
    """Improvement rate against a zero baseline score."""


# --- optimization ----------------------------------------------------------

class NonFiniteGradientError(NumericalError):
    """NaN or Inf encountered in a cost or gradient evaluation."""


class StepOutOfBoundsError(HydrogradError):
    """Finite-difference probe would leave the feasible parameter box."""


class LineSearchFailureWarning(UserWarning):
    """Bounded quasi-Newton line search gave up; best iterate returned."""


class DegenerateGaugeWarning(UserWarning):
    """A gauge was excluded from the cost; weights renormalized."""


class ConstantDescriptorWarning(UserWarning):
    """Descriptor layer constant over active cells; normalized to zeros."""


class WideHiddenLayerWarning(UserWarning):
    """Hidden layer wider than the sqrt(n_desc*n_cells) guideline."""
