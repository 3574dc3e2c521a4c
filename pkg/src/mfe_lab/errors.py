"""Exception types shared across the package."""


class MfeLabError(Exception):
    """Base class for every error raised by this package."""


class GridMismatch(MfeLabError):
    """Two objects that must live on the same grid do not."""


class PointOutOfBounds(MfeLabError):
    """A point falls outside the grid bounds by more than the snap tolerance."""


class MarginalMismatch(MfeLabError):
    """Second-axis marginals differ, so the slice-wise stochastic order is undefined."""


class MassSumViolation(MfeLabError):
    """Probability weights do not sum to one (or are negative) beyond tolerance."""


class TransitionEscape(MfeLabError):
    """A transition image leaves the state grid by more than the snap tolerance."""


class MaxIterationsExceeded(MfeLabError):
    """An iterative routine exhausted its budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class MaxOuterExceeded(MfeLabError):
    """The outer equilibrium loop exhausted its budget.

    Carries the best iterate found so callers can inspect or resume it.
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class UnorderedProbes(MfeLabError):
    """Probe populations are not ordered by the aggregator."""


class InvalidParams(MfeLabError):
    """Model parameters violate the family's standing assumptions.

    ``violations`` lists every violated assumption by name.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InfeasibleBudget(MfeLabError):
    """No feasible action exists at some state node."""


class NonPositiveCapital(MfeLabError):
    """Factor prices require strictly positive aggregate capital."""


class ConfigError(MfeLabError):
    """A run configuration file is malformed, has unknown keys, or is out of range."""
