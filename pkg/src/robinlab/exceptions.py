"""Exception hierarchy shared by all robinlab modules."""


class RobinLabError(Exception):
    """Base class for every error raised by robinlab."""


class MetricError(RobinLabError, ValueError):
    """A metric tensor is non-symmetric or violates its ellipticity bound."""


class GeometryError(RobinLabError, ValueError):
    """Invalid curves, domains or meshes."""


class CoercivityError(RobinLabError, ValueError):
    """The Robin problem fails the coercivity guard (q >= 0, q not identically 0 or p > 0)."""


class AdmissibilityError(RobinLabError, ValueError):
    """A coefficient leaves the admissible class (0 <= q <= kappa)."""


class ConvergenceError(RobinLabError, RuntimeError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class IllConditionedError(RobinLabError, RuntimeError):
    """The discretised forward map is numerically singular."""


class PositivityError(RobinLabError, RuntimeError):
    """The forward solution is not positive on S, so q cannot be updated."""


class StagnationError(RobinLabError, RuntimeError):
    """The data mismatch stopped decreasing during a fixed-point inversion."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class PreconditionError(RobinLabError, ValueError):
    """Sign or range assumptions of an audit are violated."""


class UniquenessViolation(RobinLabError, RuntimeError):
    """A nonzero flux produced vanishing Cauchy data."""


class ConfigError(RobinLabError, ValueError):
    """Invalid experiment configuration; the message names the offending field."""
