"""Exception types shared across the package."""


class FlowError(Exception):
    """Base class for all package-specific failures."""


class InputError(FlowError, ValueError):
    """Malformed or out-of-domain input (shapes, signs, missing fields)."""


class UnsupportedScenarioError(FlowError):
    """Geometrically valid request outside the implemented scenario class."""


class HypothesisViolationError(FlowError):
    """A mathematical hypothesis required by a flow variant fails numerically.

    Raised before any evolution is performed, e.g. when the prescribed-flow
    one-form fails its closedness pre-check.
    """


class SolveError(FlowError):
    """A linear solve or time-march inside the finite-difference path failed."""


class DegenerateTrajectoryError(FlowError):
    """A trajectory statistic is undefined (e.g. decay rate of zero data)."""
