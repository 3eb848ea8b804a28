"""Exception types raised across the package."""


class StabilityLabError(Exception):
    """Base class for all errors raised by stability_lab."""


class TooFewPointsError(StabilityLabError, ValueError):
    pass


class IntegrationDivergedError(StabilityLabError, FloatingPointError):
    """A non-finite state appeared during time stepping."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"integration diverged at step {step}")


class AmplitudeBelowFloorError(StabilityLabError, ValueError):
    """The wave amplitude (or density) dropped below the floor, i.e. a node."""

    def __init__(self, index, x, value, floor):
        self.index = index
        self.x = x
        self.value = value
        self.floor = floor
        super().__init__(
            f"amplitude {value:.3e} below floor {floor:.3e} at x={x:.6g} (index {index})"
        )


class DimensionMismatchError(StabilityLabError, ValueError):
    pass


class GridMismatchError(StabilityLabError, ValueError):
    pass


class BranchSingularityError(StabilityLabError, ValueError):
    """dS/dq vanished: the point sits on a caustic of the complete integral."""


class NotIndependentError(StabilityLabError, ValueError):
    pass


class EmptyTailError(StabilityLabError, ValueError):
    pass


class ZeroMagnitudeError(StabilityLabError, ValueError):
    pass


class ZeroEnergyError(StabilityLabError, ZeroDivisionError):
    pass


class ValidationError(StabilityLabError, ValueError):
    """Supplied analytic derivatives disagree with finite differences."""


class TrajectoryLeftGridError(StabilityLabError, ValueError):
    pass


class SupportOverflowError(StabilityLabError, ValueError):
    pass


class UnknownScenarioError(StabilityLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown scenario"


class MissingRunError(StabilityLabError, FileNotFoundError):
    pass


class BoundaryLeakWarning(UserWarning):
    """Wave function or density is not negligible at the grid edge."""
